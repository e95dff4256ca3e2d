//! Finite complex input alphabets.
//!
//! Points are stored in label order: `points[b]` is the point carrying the bit
//! label `b`, so demapping a symbol index yields its bits directly.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{cis, C64};

/// Rotation that gives QPSK a non-zero coordinate product distance.
pub fn qpsk_rotation() -> f64 {
    2f64.atan() / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
    bits_per_symbol: u32,
    label: String,
    rotation: f64,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn pam_levels(l: usize) -> Vec<f64> {
    (0..l).map(|j| 2.0 * j as f64 - (l as f64 - 1.0)).collect()
}

impl Constellation {
    fn normalized(points: Vec<C64>, label: String) -> Self {
        let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        let scale = energy.sqrt().recip();
        let bits_per_symbol = points.len().trailing_zeros();
        Constellation {
            points: points.into_iter().map(|p| p * scale).collect(),
            bits_per_symbol,
            label,
            rotation: 0.0,
        }
    }

    /// Square QAM with Gray labels; the high half of the label selects the
    /// in-phase level, the low half the quadrature level.
    pub fn qam(m: usize) -> Result<Self> {
        if !matches!(m, 4 | 16 | 64) {
            return Err(Error::UnsupportedSize { family: "qam", size: m });
        }
        let l = (m as f64).sqrt() as usize;
        let half = l.trailing_zeros();
        let levels = pam_levels(l);
        let mut points = vec![C64::new(0.0, 0.0); m];
        for i in 0..l {
            for q in 0..l {
                let label = (gray(i) << half) | gray(q);
                points[label] = C64::new(levels[i], levels[q]);
            }
        }
        Ok(Self::normalized(points, format!("qam{m}")))
    }

    /// Gray-labelled PSK. QPSK sits on the diagonals, the others start at 1.
    pub fn psk(m: usize) -> Result<Self> {
        if !matches!(m, 2 | 4 | 8) {
            return Err(Error::UnsupportedSize { family: "psk", size: m });
        }
        let offset = if m == 4 { PI / 4.0 } else { 0.0 };
        let mut points = vec![C64::new(0.0, 0.0); m];
        for k in 0..m {
            points[gray(k)] = cis(offset + 2.0 * PI * k as f64 / m as f64);
        }
        let label = match m {
            2 => "bpsk".to_string(),
            4 => "qpsk".to_string(),
            _ => format!("psk{m}"),
        };
        Ok(Self::normalized(points, label))
    }

    /// `{a + ωb : a, b ∈ √m-PAM}` with `ω = e^{2iπ/3}`, labelled row-major
    /// over the `(a, b)` PAM indices.
    pub fn hex(m: usize) -> Result<Self> {
        if !matches!(m, 4 | 16 | 64) {
            return Err(Error::UnsupportedSize { family: "hex", size: m });
        }
        let l = (m as f64).sqrt() as usize;
        let levels = pam_levels(l);
        let omega = cis(2.0 * PI / 3.0);
        let mut points = Vec::with_capacity(m);
        for &a in &levels {
            for &b in &levels {
                points.push(C64::new(a, 0.0) + omega * b);
            }
        }
        Ok(Self::normalized(points, format!("hex{m}")))
    }

    /// Looks a constellation up by its config name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "bpsk" => Self::psk(2),
            "qpsk" => Self::psk(4),
            "psk8" => Self::psk(8),
            "qpsk-rot" => Ok(Self::psk(4)?.rotate(qpsk_rotation()).with_label("qpsk-rot")),
            "qam4" => Self::qam(4),
            "qam16" => Self::qam(16),
            "qam64" => Self::qam(64),
            "hex4" => Self::hex(4),
            "hex16" => Self::hex(16),
            "hex64" => Self::hex(64),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }

    pub fn rotate(&self, phi: f64) -> Self {
        let r = cis(phi);
        Constellation {
            points: self.points.iter().map(|p| p * r).collect(),
            bits_per_symbol: self.bits_per_symbol,
            label: self.label.clone(),
            rotation: self.rotation + phi,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Accumulated rotation in radians.
    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn map(&self, bits: usize) -> C64 {
        self.points[bits]
    }

    /// Index (= bit label) of the nearest point.
    pub fn demap(&self, z: C64) -> usize {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - z).norm_sqr()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Coordinate product distance: `min |u_I − v_I|·|u_Q − v_Q|` over distinct pairs.
    pub fn cpd(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, u) in self.points.iter().enumerate() {
            for v in &self.points[a + 1..] {
                let d = u - v;
                best = best.min(d.re.abs() * d.im.abs());
            }
        }
        best
    }

    /// All distinct pairwise differences `u − v` (including 0), deduplicated
    /// to within `1e-12` and sorted by (re, im).
    pub fn difference_alphabet(&self) -> Vec<C64> {
        let mut diffs: Vec<C64> = Vec::new();
        for u in &self.points {
            for v in &self.points {
                let d = u - v;
                if !diffs.iter().any(|e| (e - d).norm() <= 1e-12) {
                    diffs.push(d);
                }
            }
        }
        diffs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        diffs
    }
}
