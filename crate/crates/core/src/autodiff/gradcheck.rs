use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than relative
/// terms, since finite differences cannot resolve them relatively.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max relative error per parameter tensor.
    pub per_param: Vec<f64>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

fn eval<F>(f: &mut F, params: &[Tensor]) -> Result<(Graph, Vec<Var>, Var)>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t)).collect();
    let loss = f(&mut g, &vars)?;
    if g.value(loss).len() != 1 {
        return Err(Error::Contract("gradient_check needs a scalar function".into()));
    }
    Ok((g, vars, loss))
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` builds a scalar from the bound parameters. It must be deterministic:
/// two forward passes at the same point have to agree bit for bit.
pub fn gradient_check<F>(mut f: F, params: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let (mut g, vars, loss) = eval(&mut f, params)?;
    let base = g.value(loss)[0];
    let (g2, _, loss2) = eval(&mut f, params)?;
    let again = g2.value(loss2)[0];
    if base.to_bits() != again.to_bits() {
        return Err(Error::Determinism(format!("two passes gave {base} and {again}")));
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut per_param = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut num = Vec::with_capacity(params[p].numel());
        for i in 0..params[p].numel() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + step;
            let (gp, _, lp) = eval(&mut f, &work)?;
            work[p].data_mut()[i] = orig - step;
            let (gm, _, lm) = eval(&mut f, &work)?;
            work[p].data_mut()[i] = orig;
            num.push((gp.value(lp)[0] - gm.value(lm)[0]) / (2.0 * step));
        }
        let worst = analytic[p]
            .iter()
            .zip(&num)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        per_param.push(worst);
        numeric.push(num);
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
        tol,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let w = Tensor::vector(vec![3.0]).with_grad();
        let r = gradient_check(
            |g, v| {
                let sq = g.hadamard(v[0], v[0])?;
                g.sum(sq)
            },
            &[w],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!((r.analytic[0][0] - 6.0).abs() < 1e-12);
        assert!((r.numeric[0][0] - 6.0).abs() < 1e-6);
        assert!(r.passed());
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let w = Tensor::vector(vec![1.0, -2.0]).with_grad();
        let r = gradient_check(
            |g, _| {
                let c = g.constant(Tensor::scalar(4.0));
                Ok(c)
            },
            &[w],
            1e-5,
            1e-8,
        )
        .unwrap();
        assert_eq!(r.analytic[0], vec![0.0, 0.0]);
        assert_eq!(r.numeric[0], vec![0.0, 0.0]);
        assert!(r.passed());
    }

    #[test]
    fn nondeterminism_detected() {
        let w = Tensor::vector(vec![1.0]).with_grad();
        let mut calls = 0.0;
        let err = gradient_check(
            |g, v| {
                calls += 1.0;
                let s = g.scale(v[0], calls)?;
                g.sum(s)
            },
            &[w],
            1e-5,
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Determinism(_)));
    }

    #[test]
    fn rejects_nonpositive_step() {
        let w = Tensor::vector(vec![1.0]).with_grad();
        assert!(gradient_check(|g, v| g.sum(v[0]), &[w], 0.0, 1e-6).is_err());
    }
}
