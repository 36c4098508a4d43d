//! Spatial median by Weiszfeld iteration with the Vardi-Zhang correction for
//! iterates that land exactly on a data point.

use nalgebra::DVector;

use super::RobustError;
use crate::DataMatrix;

/// Minimize `sum_i ||x_i - m||` over m.
///
/// Stops when the step norm falls below `tol`, or when the iterate coincides
/// with a data point that satisfies the optimality condition
/// `||sum_{x_i != m} U(x_i - m)|| <= #{i : x_i = m}`.
pub fn spatial_median(
    x: &DataMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, RobustError> {
    let n = x.nrows();
    let p = x.ncols();
    assert!(n >= 1 && p >= 1, "spatial_median requires a nonempty matrix");

    // Start from the coordinatewise mean.
    let mut m = DVector::<f64>::zeros(p);
    for i in 0..n {
        m += x.row(i).transpose();
    }
    m /= n as f64;

    #[cfg(debug_assertions)]
    let mut prev_objective = f64::INFINITY;

    for _ in 0..max_iter {
        // Coincidence threshold: relative to the local magnitude of the point.
        let coincide_tol = 1e-14 * (1.0 + m.norm());

        let mut weight_sum = 0.0;
        let mut weighted = DVector::<f64>::zeros(p);
        let mut pull = DVector::<f64>::zeros(p); // sum of unit vectors away from m
        let mut multiplicity = 0usize;

        #[cfg(debug_assertions)]
        let mut objective = 0.0;

        for i in 0..n {
            let diff = x.row(i).transpose() - &m;
            let d = diff.norm();
            #[cfg(debug_assertions)]
            {
                objective += d;
            }
            if d <= coincide_tol {
                multiplicity += 1;
                continue;
            }
            let w = 1.0 / d;
            weight_sum += w;
            weighted.axpy(w, &x.row(i).transpose(), 1.0);
            pull.axpy(w, &diff, 1.0);
        }

        #[cfg(debug_assertions)]
        {
            debug_assert!(
                objective <= prev_objective * (1.0 + 1e-9) + 1e-12,
                "Weiszfeld objective increased: {objective} > {prev_objective}"
            );
            prev_objective = objective;
        }

        if multiplicity == n {
            // Every observation equals the iterate: trivially optimal.
            return Ok(m);
        }

        let next = if multiplicity == 0 {
            &weighted / weight_sum
        } else {
            // Vardi-Zhang: the iterate sits on a data point of multiplicity
            // eta. It is optimal when ||pull|| <= eta; otherwise retract the
            // plain Weiszfeld target toward the data point.
            let eta = multiplicity as f64;
            let r = pull.norm();
            if r <= eta {
                return Ok(m);
            }
            let gamma = (eta / r).min(1.0);
            let weiszfeld = &weighted / weight_sum;
            weiszfeld * (1.0 - gamma) + &m * gamma
        };

        let step = (&next - &m).norm();
        m = next;
        if step < tol {
            return Ok(m);
        }
    }

    Err(RobustError::MedianDidNotConverge { best: m })
}
