//! Central-difference validation of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Scalar objective over a 64-bit parameter store.
pub trait Objective {
    fn value(&self, params: &ParamStore<f64>) -> Result<f64>;
    fn value_and_grad(&self, params: &ParamStore<f64>) -> Result<(f64, Gradients<f64>)>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates checked per parameter (all of them when smaller).
    pub coords_per_param: usize,
    pub abs_floor: f64,
    pub seed: u64,
    /// Combine the differences at `h` and `h/2` as `(4·D(h/2) − D(h)) / 3`,
    /// cancelling the `h²` truncation term so a larger, round-off-safe step
    /// can be used.
    pub richardson: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 4e-3,
            coords_per_param: 200,
            abs_floor: 1e-8,
            seed: 0,
            richardson: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

/// Compares tape gradients with `(f(θ+h) − f(θ−h)) / 2h` on a random
/// subsample of coordinates of every trainable parameter. The relative
/// error is `|a − n| / max(|a|, |n|, abs_floor)`.
pub fn grad_check<O: Objective>(
    objective: &O,
    params: &mut ParamStore<f64>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let (f0, grads) = objective.value_and_grad(params)?;
    if !f0.is_finite() {
        return Err(Error::Numerical(format!("objective is not finite: {f0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        if !params.slot(id).trainable {
            continue;
        }
        let analytic = grads.dense(params, id);
        let len = analytic.len();
        let coords: Vec<usize> = if len <= opts.coords_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let coarse = central_difference(objective, params, id, idx, opts.step)?;
            let numeric = if opts.richardson {
                let fine = central_difference(objective, params, id, idx, opts.step / 2.0)?;
                (4.0 * fine - coarse) / 3.0
            } else {
                coarse
            };
            let a = analytic.as_slice()[idx];
            if !a.is_finite() {
                return Err(Error::Numerical(format!(
                    "analytic gradient of {}[{idx}] is {a}",
                    params.slot(id).name
                )));
            }
            let denom = a.abs().max(numeric.abs()).max(opts.abs_floor);
            let rel = (a - numeric).abs() / denom;
            report.coords_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((params.slot(id).name.clone(), idx));
            }
        }
    }
    Ok(report)
}

fn central_difference<O: Objective>(
    objective: &O,
    params: &mut ParamStore<f64>,
    id: ParamId,
    idx: usize,
    step: f64,
) -> Result<f64> {
    let orig = params.value(id).as_slice()[idx];
    params.value_mut(id).as_mut_slice()[idx] = orig + step;
    let plus = objective.value(params);
    params.value_mut(id).as_mut_slice()[idx] = orig - step;
    let minus = objective.value(params);
    params.value_mut(id).as_mut_slice()[idx] = orig;
    let (plus, minus) = (plus?, minus?);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::Numerical(format!(
            "objective not finite while perturbing {}[{idx}]",
            params.slot(id).name
        )));
    }
    Ok((plus - minus) / (2.0 * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::tape::Tape;
    use crate::tensor::Matrix;

    struct SumOfSquares;

    impl Objective for SumOfSquares {
        fn value(&self, params: &ParamStore<f64>) -> Result<f64> {
            Ok(params.slots().map(|s| s.value.as_slice().iter().map(|v| v * v).sum::<f64>()).sum())
        }

        fn value_and_grad(&self, params: &ParamStore<f64>) -> Result<(f64, Gradients<f64>)> {
            let mut tape = Tape::new(params);
            let mut acc = Gradients::for_store(params);
            let mut total = 0.0;
            for id in params.ids() {
                let p = tape.param(id);
                let sq = tape.mul(p, p)?;
                let s = tape.sum(sq);
                total += tape.value(s).get(0, 0);
                tape.backward(s, &mut acc)?;
            }
            Ok((total, acc))
        }
    }

    #[test]
    fn sum_of_squares_matches() {
        let mut store = ParamStore::new();
        store.register("theta", Matrix::from_rows(&[&[0.7, -1.3, 2.1, 0.4, -0.9]]));
        let report = grad_check(&SumOfSquares, &mut store, GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error <= 1e-9, "{report:?}");
    }

    #[test]
    fn subsamples_large_parameters() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        store.register("a", Matrix::randn(20, 30, 1.0, &mut rng));
        store.register("b", Matrix::randn(1, 5, 1.0, &mut rng));
        let report = grad_check(&SumOfSquares, &mut store, GradCheckOptions::default()).unwrap();
        // the objective sums 605 squares, so round-off in f(θ±h) limits accuracy
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
        assert_eq!(report.coords_checked, 205);
    }

    struct SumOfCubes;

    impl Objective for SumOfCubes {
        fn value(&self, params: &ParamStore<f64>) -> Result<f64> {
            Ok(params.slots().map(|s| s.value.as_slice().iter().map(|v| v * v * v).sum::<f64>()).sum())
        }

        fn value_and_grad(&self, params: &ParamStore<f64>) -> Result<(f64, Gradients<f64>)> {
            let mut tape = Tape::new(params);
            let mut acc = Gradients::for_store(params);
            let mut total = 0.0;
            for id in params.ids() {
                let p = tape.param(id);
                let sq = tape.mul(p, p)?;
                let cube = tape.mul(sq, p)?;
                let s = tape.sum(cube);
                total += tape.value(s).get(0, 0);
                tape.backward(s, &mut acc)?;
            }
            Ok((total, acc))
        }
    }

    #[test]
    fn richardson_cancels_cubic_truncation() {
        // a single central difference of x³ is off by exactly h²
        let mut store = ParamStore::new();
        store.register("theta", Matrix::from_rows(&[&[0.5, -1.0, 2.0]]));
        let single = GradCheckOptions {
            step: 0.1,
            richardson: false,
            ..GradCheckOptions::default()
        };
        let coarse = grad_check(&SumOfCubes, &mut store, single).unwrap();
        assert!((coarse.max_rel_error - 0.01 / 0.76).abs() < 1e-9, "{coarse:?}");
        let extrapolated = GradCheckOptions {
            richardson: true,
            ..single
        };
        let fine = grad_check(&SumOfCubes, &mut store, extrapolated).unwrap();
        assert!(fine.max_rel_error < 1e-12, "{fine:?}");
    }

    struct NotFinite;

    impl Objective for NotFinite {
        fn value(&self, _: &ParamStore<f64>) -> Result<f64> {
            Ok(f64::NAN)
        }
        fn value_and_grad(&self, p: &ParamStore<f64>) -> Result<(f64, Gradients<f64>)> {
            Ok((f64::NAN, Gradients::for_store(p)))
        }
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let mut store = ParamStore::new();
        store.register("a", Matrix::zeros(1, 1));
        assert!(matches!(
            grad_check(&NotFinite, &mut store, GradCheckOptions::default()),
            Err(Error::Numerical(_))
        ));
    }
}
