//! Euclidean projection onto the probability simplex.

use super::NumericsError;
use crate::scalar::Real;

/// Projects `v` onto `{p : p >= 0, sum(p) = 1}` by sort-and-threshold.
pub fn project_simplex<T: Real>(v: &[T]) -> Result<Vec<T>, NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::Domain("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::Domain("non-finite entry in projection input".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = T::zero();
    let mut tau = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - T::one()) / T::from_usize_lossy(k + 1);
        if u - t > T::zero() {
            tau = t;
        } else {
            break;
        }
    }
    Ok(v.iter().map(|&x| (x - tau).max(T::zero())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64]) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn point_in_simplex_is_fixed() {
        assert_close(&project_simplex(&[0.5, 0.5]).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn projects_to_vertex() {
        assert_close(&project_simplex(&[2.0, 0.0]).unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn three_dim_projection_matches_kkt_and_grid() {
        let v = [0.4, -0.2, 0.8];
        let p = project_simplex(&v).unwrap();
        assert_close(&p, &[0.3, 0.0, 0.7]);

        // KKT: p = max(v - tau, 0) with a single tau, and the zero
        // coordinate has v_i <= tau.
        let tau = v[0] - p[0];
        assert!((v[2] - p[2] - tau).abs() < 1e-12 && v[1] <= tau);

        // Grid search over the simplex (step 1/200) finds the same minimiser.
        let steps = 200;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=steps {
            for j in 0..=steps - i {
                let q = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                let d: f64 = q.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, q);
                }
            }
        }
        for (a, b) in best.1.iter().zip(&p) {
            assert!((a - b).abs() <= 1.0 / steps as f64);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_simplex::<f64>(&[]).is_err());
        assert!(project_simplex(&[1.0, f64::NAN]).is_err());
        assert!(project_simplex(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = project_simplex(&[0.4f32, -0.2, 0.8]).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-6 && p[1] == 0.0 && (p[2] - 0.7).abs() < 1e-6);
    }
}
