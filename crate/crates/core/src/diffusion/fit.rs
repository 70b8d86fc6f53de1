use super::{DiffusionError, DiffusionTensor, GradientScheme};

/// Floor applied to signals before taking logs in the tensor fit.
pub const LOG_FLOOR: f64 = 1e-12;

/// Relative threshold on the R diagonal below which the scheme counts as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Rows `-b · [gx², gy², gz², 2gxgy, 2gxgz, 2gygz]`, so that
/// `row · d = -b gᵀDg` for `d` in component order.
pub fn design_matrix(scheme: &GradientScheme) -> Vec<[f64; 6]> {
    scheme
        .entries()
        .iter()
        .map(|e| {
            let [x, y, z] = e.dir.to_array();
            let b = e.b;
            [
                -b * x * x,
                -b * y * y,
                -b * z * z,
                -b * 2.0 * x * y,
                -b * 2.0 * x * z,
                -b * 2.0 * y * z,
            ]
        })
        .collect()
}

/// Ordinary least-squares tensor fit on log signals, factorized once per
/// scheme with Householder QR and reused across voxels.
#[derive(Debug, Clone)]
pub struct TensorFitter {
    rows: usize,
    /// Householder vectors, one per column, each of length `rows`.
    reflectors: Vec<Vec<f64>>,
    /// Upper-triangular R, row-major.
    r: [[f64; 6]; 6],
}

impl TensorFitter {
    pub fn new(scheme: &GradientScheme) -> Result<Self, DiffusionError> {
        let weighted = scheme.weighted_count();
        if weighted < 6 {
            return Err(DiffusionError::RankDeficientScheme {
                reason: format!("{weighted} entries with b > 0, need at least 6"),
            });
        }
        let rows = scheme.len();
        // Column-major copy of A.
        let a_rows = design_matrix(scheme);
        let mut cols: Vec<Vec<f64>> = (0..6).map(|j| a_rows.iter().map(|r| r[j]).collect()).collect();
        let mut reflectors = Vec::with_capacity(6);

        for k in 0..6 {
            let norm = cols[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut v = vec![0.0; rows];
            if norm > 0.0 {
                let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
                v[k..].copy_from_slice(&cols[k][k..]);
                v[k] -= alpha;
                let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
                if vnorm2 > 0.0 {
                    for col in cols.iter_mut().skip(k) {
                        let dot: f64 = v[k..].iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
                        let f = 2.0 * dot / vnorm2;
                        for (c, vi) in col[k..].iter_mut().zip(&v[k..]) {
                            *c -= f * vi;
                        }
                    }
                    let inv = 1.0 / vnorm2.sqrt();
                    v.iter_mut().for_each(|x| *x *= inv);
                } else {
                    v.iter_mut().for_each(|x| *x = 0.0);
                }
            }
            reflectors.push(v);
        }

        let mut r = [[0.0; 6]; 6];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..=j {
                r[i][j] = col[i];
            }
        }
        let max_diag = (0..6).map(|i| r[i][i].abs()).fold(0.0, f64::max);
        if let Some(i) = (0..6).find(|&i| !(r[i][i].abs() > RANK_TOL * max_diag)) {
            return Err(DiffusionError::RankDeficientScheme {
                reason: format!("design matrix rank < 6 (pivot {i} is {:e})", r[i][i]),
            });
        }
        Ok(Self { rows, reflectors, r })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn fit(&self, signals: &[f64], s0: f64) -> Result<DiffusionTensor, DiffusionError> {
        if !(s0 > 0.0) {
            return Err(DiffusionError::NonPositiveS0(s0));
        }
        if signals.len() != self.rows {
            return Err(DiffusionError::LengthMismatch { expected: self.rows, actual: signals.len() });
        }
        let mut y: Vec<f64> = signals.iter().map(|&s| (s.max(LOG_FLOOR) / s0).ln()).collect();
        Ok(self.solve_log(&mut y))
    }

    /// Solves `A d = y` in the least-squares sense, consuming `y` as scratch.
    fn solve_log(&self, y: &mut [f64]) -> DiffusionTensor {
        for (k, v) in self.reflectors.iter().enumerate() {
            let dot: f64 = v[k..].iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            for (yi, vi) in y[k..].iter_mut().zip(&v[k..]) {
                *yi -= 2.0 * dot * vi;
            }
        }
        let mut d = [0.0; 6];
        for i in (0..6).rev() {
            let mut acc = y[i];
            for j in (i + 1)..6 {
                acc -= self.r[i][j] * d[j];
            }
            d[i] = acc / self.r[i][i];
        }
        DiffusionTensor::from_components(d)
    }
}

/// Fits one voxel. For whole volumes build a [`TensorFitter`] once.
pub fn fit_tensor(
    signals: &[f64],
    s0: f64,
    scheme: &GradientScheme,
) -> Result<DiffusionTensor, DiffusionError> {
    if !(s0 > 0.0) {
        return Err(DiffusionError::NonPositiveS0(s0));
    }
    if signals.len() != scheme.len() {
        return Err(DiffusionError::LengthMismatch { expected: scheme.len(), actual: signals.len() });
    }
    TensorFitter::new(scheme)?.fit(signals, s0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{synthesize_signals, GradientEntry, UnitDirection};

    fn six_plus_b0() -> GradientScheme {
        let dirs = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        let mut e = vec![GradientEntry { b: 0.0, dir: UnitDirection::x_axis() }];
        e.extend(dirs.iter().map(|d| GradientEntry {
            b: 1000.0,
            dir: UnitDirection::new(d[0], d[1], d[2]).unwrap(),
        }));
        GradientScheme::new(e).unwrap()
    }

    #[test]
    fn design_matrix_rows() {
        let s = GradientScheme::new(vec![
            GradientEntry { b: 1000.0, dir: UnitDirection::x_axis() },
            GradientEntry { b: 0.0, dir: UnitDirection::new(0.2, 0.3, 0.4).unwrap() },
            GradientEntry { b: 1000.0, dir: UnitDirection::new(1.0, 1.0, 0.0).unwrap() },
        ])
        .unwrap();
        let a = design_matrix(&s);
        assert_eq!(a[0], [-1000.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(a[1].iter().all(|&x| x == 0.0));
        let want = [-500.0, -500.0, 0.0, -1000.0, 0.0, 0.0];
        for (g, w) in a[2].iter().zip(want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn row_dot_matches_quadratic_form() {
        let d = DiffusionTensor::from_components([1.1e-3, 0.4e-3, 0.9e-3, 0.2e-3, -0.1e-3, 0.05e-3]);
        let s = six_plus_b0();
        for (row, e) in design_matrix(&s).iter().zip(s.entries()) {
            let dot: f64 = row.iter().zip(d.components()).map(|(a, b)| a * b).sum();
            assert!((dot + e.b * d.quadratic_form(&e.dir)).abs() < 1e-15);
        }
    }

    #[test]
    fn minimal_scheme_round_trip_and_zero_attenuation() {
        let s = six_plus_b0();
        let d = DiffusionTensor::from_components([1.1e-3, 0.4e-3, 0.9e-3, 0.2e-3, -0.1e-3, 0.05e-3]);
        let fit = fit_tensor(&synthesize_signals(&d, 250.0, &s), 250.0, &s).unwrap();
        assert!(fit.max_abs_diff(&d) < 1e-12);

        let flat = vec![250.0; s.len()];
        let fit = fit_tensor(&flat, 250.0, &s).unwrap();
        assert!(fit.max_abs_diff(&DiffusionTensor::ZERO) < 1e-12);
    }

    #[test]
    fn errors() {
        let s = six_plus_b0();
        let five = GradientScheme::new(s.entries()[..6].to_vec()).unwrap();
        assert!(matches!(
            fit_tensor(&[1.0; 6], 1.0, &five),
            Err(DiffusionError::RankDeficientScheme { .. })
        ));
        // Six entries but only five distinct directions.
        let mut dup = s.entries()[1..].to_vec();
        dup[5] = dup[4];
        let dup = GradientScheme::new(dup).unwrap();
        assert!(matches!(TensorFitter::new(&dup), Err(DiffusionError::RankDeficientScheme { .. })));
        assert!(matches!(fit_tensor(&[1.0; 7], 0.0, &s), Err(DiffusionError::NonPositiveS0(_))));
        assert!(matches!(
            fit_tensor(&[1.0; 3], 1.0, &s),
            Err(DiffusionError::LengthMismatch { expected: 7, actual: 3 })
        ));
    }

    #[test]
    fn zero_signal_is_floored() {
        let s = six_plus_b0();
        let mut sig = vec![1.0; s.len()];
        sig[2] = 0.0;
        let d = fit_tensor(&sig, 1.0, &s).unwrap();
        assert!(d.is_finite());
        assert!((d.dyy - (-(LOG_FLOOR.ln()) / 1000.0)).abs() < 1e-9);
    }
}
