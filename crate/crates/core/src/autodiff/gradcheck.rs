//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-input comparison between tape and finite-difference gradients.
#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    /// `max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub grad_norm_inf: f64,
    /// Gradient is below what the difference quotient can resolve at `tol`
    /// (e.g. saturated sigmoid); relative error is not meaningful and the
    /// block is excluded from `passed`.
    pub near_zero: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
    /// Smallest distance of any relu/leaky_relu input to its kink.
    pub kink_distance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| !b.near_zero)
            .fold(0.0, |m, b| m.max(b.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn near_zero_blocks(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| b.near_zero)
    }
}

const NEAR_ZERO: f64 = 1e-10;
/// Rounding in one central difference is about `ROUNDOFF * eps * |f| / h`.
const ROUNDOFF: f64 = 16.0;

/// Compares the tape gradient of scalar `f` with central differences of step
/// `h` for each named input block.
pub fn grad_check<F>(f: F, inputs: &[(String, Tensor)], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.numel() != 1 {
            return Err(Error::shape("grad_check", format!("output shape {:?} is not scalar", v.shape())));
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let mut grads = tape.backward(out)?;
    let kink_distance = tape.kink_distance();
    let noise = ROUNDOFF * f64::EPSILON * tape.value(out).item().abs().max(1.0) / h;
    let floor = NEAR_ZERO.max(noise / tol);

    let mut values: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut blocks = Vec::with_capacity(inputs.len());
    for (b, (name, base)) in inputs.iter().enumerate() {
        let analytic = grads
            .take(vars[b])
            .unwrap_or_else(|| Tensor::zeros(base.rows(), base.cols()));
        let mut numeric = vec![0.0; base.numel()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = base.data()[k];
            values[b].data_mut()[k] = orig + h;
            let plus = eval(&values)?;
            values[b].data_mut()[k] = orig - h;
            let minus = eval(&values)?;
            values[b].data_mut()[k] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        let max_abs_error = analytic
            .data()
            .iter()
            .zip(&numeric)
            .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
        let numeric_norm = numeric.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = analytic.max_abs().max(numeric_norm);
        let near_zero = scale < floor;
        blocks.push(BlockReport {
            name: name.clone(),
            max_rel_error: if near_zero { 0.0 } else { max_abs_error / scale },
            max_abs_error,
            grad_norm_inf: scale,
            near_zero,
        });
    }
    Ok(GradCheckReport {
        blocks,
        tolerance: tol,
        kink_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::row(vec![0.3, -1.2, 2.5, 4.0]);
        let report = grad_check(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                Ok(tape.sum_all(sq))
            },
            &[("x".into(), x)],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-6);
    }

    #[test]
    fn saturated_sigmoid_is_flagged() {
        let x = Tensor::row(vec![40.0, -40.0]);
        let report = grad_check(
            |tape, v| {
                let s = tape.sigmoid(v[0]);
                Ok(tape.sum_all(s))
            },
            &[("x".into(), x)],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.blocks[0].near_zero);
        assert!(report.passed());
        assert_eq!(report.near_zero_blocks().count(), 1);
    }

    #[test]
    fn sigmoid_at_twenty_is_small_but_checked() {
        let x = Tensor::row(vec![20.0, -20.0, 0.1]);
        let report = grad_check(
            |tape, v| {
                let s = tape.sigmoid(v[0]);
                Ok(tape.sum_all(s))
            },
            &[("x".into(), x)],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn non_scalar_output_is_an_error() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let r = grad_check(|_, v| Ok(v[0]), &[("x".into(), x)], 1e-4, 1e-6);
        assert!(r.is_err());
    }
}
