use super::{DiffusionTensor, UnitDirection};

const OFF_DIAGONAL_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 50;

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSystem {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub v1: UnitDirection,
    pub v2: UnitDirection,
    pub v3: UnitDirection,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }

    pub fn eigenvectors(&self) -> [UnitDirection; 3] {
        [self.v1, self.v2, self.v3]
    }

    pub fn reconstruct(&self) -> DiffusionTensor {
        DiffusionTensor::from_eigen(&[
            (self.lambda1, self.v1.to_array()),
            (self.lambda2, self.v2.to_array()),
            (self.lambda3, self.v3.to_array()),
        ])
    }
}

fn off_diagonal_norm(a: &[[f64; 3]; 3]) -> f64 {
    (2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2])).sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 tensor.
///
/// Sweeps the pairs (0,1), (0,2), (1,2) until the off-diagonal Frobenius
/// norm drops below 1e-14 (or below rounding level relative to the matrix
/// norm), capped at 50 sweeps. Eigenvalues are stably sorted descending and
/// each eigenvector's first non-negligible component is made non-negative.
pub fn eigendecompose_sym3(d: &DiffusionTensor) -> EigenSystem {
    let mut a = d.to_matrix();
    // Columns of `v` are the eigenvectors.
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off < OFF_DIAGONAL_TOL || off <= f64::EPSILON * 1e-2 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;

            // A <- Jᵀ A J with J the Givens rotation in the (p, q) plane.
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }

    let mut pairs: Vec<(f64, [f64; 3])> = (0..3)
        .map(|j| (a[j][j], [v[0][j], v[1][j], v[2][j]]))
        .collect();
    // Stable: equal eigenvalues keep the Jacobi order.
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));

    let dirs: Vec<UnitDirection> = pairs
        .iter()
        .map(|(_, vec)| canonical_sign(*vec))
        .collect();

    EigenSystem {
        lambda1: pairs[0].0,
        lambda2: pairs[1].0,
        lambda3: pairs[2].0,
        v1: dirs[0],
        v2: dirs[1],
        v3: dirs[2],
    }
}

fn canonical_sign(v: [f64; 3]) -> UnitDirection {
    let flip = v
        .iter()
        .find(|c| c.abs() > 1e-12)
        .map(|c| *c < 0.0)
        .unwrap_or(false);
    let s = if flip { -1.0 } else { 1.0 };
    UnitDirection::new(s * v[0], s * v[1], s * v[2]).unwrap_or(UnitDirection::x_axis())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random rotation from a random unit quaternion.
    pub(crate) fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
        let mut q = [0.0f64; 4];
        loop {
            for c in q.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            let n = q.iter().map(|c| c * c).sum::<f64>();
            if n > 1e-3 && n <= 1.0 {
                let n = n.sqrt();
                q.iter_mut().for_each(|c| *c /= n);
                break;
            }
        }
        let [w, x, y, z] = q;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    fn rotated(r: &[[f64; 3]; 3], eig: [f64; 3]) -> DiffusionTensor {
        DiffusionTensor::from_eigen(&[
            (eig[0], [r[0][0], r[1][0], r[2][0]]),
            (eig[1], [r[0][1], r[1][1], r[2][1]]),
            (eig[2], [r[0][2], r[1][2], r[2][2]]),
        ])
    }

    fn check_invariants(d: &DiffusionTensor, e: &EigenSystem) {
        assert!(e.lambda1 >= e.lambda2 && e.lambda2 >= e.lambda3);
        let v = e.eigenvectors();
        for i in 0..3 {
            assert!((v[i].dot(&v[i]) - 1.0).abs() < 1e-12);
            for j in (i + 1)..3 {
                assert!(v[i].dot(&v[j]).abs() < 1e-9, "not orthogonal: {e:?}");
            }
        }
        assert!(e.reconstruct().max_abs_diff(d) < 1e-9);
    }

    #[test]
    fn isotropic_tensor() {
        let d = DiffusionTensor::isotropic(0.8e-3);
        let e = eigendecompose_sym3(&d);
        assert_eq!(e.eigenvalues(), [0.8e-3; 3]);
        check_invariants(&d, &e);
    }

    #[test]
    fn diagonal_tensor() {
        let d = DiffusionTensor::diagonal(0.3e-3, 1.7e-3, 0.3e-3);
        let e = eigendecompose_sym3(&d);
        assert_eq!(e.eigenvalues(), [1.7e-3, 0.3e-3, 0.3e-3]);
        assert_eq!(e.v1.to_array(), [0.0, 1.0, 0.0]);
        let d = DiffusionTensor::diagonal(1.7e-3, 0.3e-3, 0.3e-3);
        assert_eq!(eigendecompose_sym3(&d).v1.to_array(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn known_spectrum_under_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let r = random_rotation(&mut rng);
            let mut eig = [
                rng.gen_range(0.1e-3..3e-3),
                rng.gen_range(0.1e-3..3e-3),
                rng.gen_range(0.1e-3..3e-3),
            ];
            let d = rotated(&r, eig);
            let e = eigendecompose_sym3(&d);
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (got, want) in e.eigenvalues().iter().zip(eig) {
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
            check_invariants(&d, &e);
        }
    }

    #[test]
    fn degenerate_and_unit_scale_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for eig in [[1.0, 1.0, 0.0], [2.0, 0.5, 0.5], [1e3, 1e3, 1e3], [1.0, 0.0, 0.0], [0.0; 3]] {
            let d = rotated(&random_rotation(&mut rng), eig);
            let e = eigendecompose_sym3(&d);
            for (got, want) in e.eigenvalues().iter().zip(eig) {
                assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()));
            }
            check_invariants(&d, &e);
        }
    }

    #[test]
    fn deterministic_and_sign_canonical() {
        let d = DiffusionTensor::from_components([1.1e-3, 0.4e-3, 0.9e-3, -0.2e-3, 0.1e-3, 0.05e-3]);
        let a = eigendecompose_sym3(&d);
        let b = eigendecompose_sym3(&d);
        assert_eq!(a, b);
        for v in a.eigenvectors() {
            let first = v.to_array().into_iter().find(|c| c.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }
}
