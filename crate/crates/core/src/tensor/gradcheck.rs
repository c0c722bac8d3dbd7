//! Central finite-difference verification of reverse-mode gradients.

use super::{Prng, Tensor};
use crate::error::{Error, Result};

/// Which elements of each input to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Selection {
    All,
    /// `count` elements per input drawn uniformly (with replacement) from `seed`.
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Maximum relative error per input, in input order.
    pub per_input: Vec<f64>,
    pub checked: usize,
}

fn rel_error(auto: f64, fd: f64) -> f64 {
    (auto - fd).abs() / auto.abs().max(fd.abs()).max(1e-8)
}

/// Max over elements of `|g_auto - g_fd| / max(|g_auto|, |g_fd|, 1e-8)` for a
/// scalar function of one tensor, using central differences with step `h`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let report = grad_check_inputs(|xs| f(&xs[0]), std::slice::from_ref(x), h, Selection::All)?;
    Ok(report.max_rel_error)
}

/// Multi-input variant of [`grad_check`]. `f` receives fresh leaves carrying
/// the values of `inputs`.
pub fn grad_check_inputs<F>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    selection: Selection,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {h}")));
    }
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|t| t.requires_grad(true)).collect();
    let loss = f(&leaves)?;
    loss.backward()?;
    let autos: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()]))
        .collect();

    let eval = |which: usize, idx: usize, delta: f64| -> Result<f64> {
        let probe: Vec<Tensor<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if j == which {
                    let mut d = t.to_vec();
                    d[idx] += delta;
                    Tensor::new(d, t.shape()).expect("same shape")
                } else {
                    t.detach()
                }
            })
            .collect();
        f(&probe)?.item()
    };

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut checked = 0;
    for (which, x) in inputs.iter().enumerate() {
        let indices: Vec<usize> = match selection {
            Selection::All => (0..x.numel()).collect(),
            Selection::Random { count, seed } => {
                let mut rng = Prng::with_stream(seed, which as u64);
                (0..count).map(|_| rng.below(x.numel())).collect()
            }
        };
        let mut worst: f64 = 0.0;
        for idx in indices {
            let fd = (eval(which, idx, h)? - eval(which, idx, -h)?) / (2.0 * h);
            worst = worst.max(rel_error(autos[which][idx], fd));
            checked += 1;
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        max_rel_error: per_input.iter().cloned().fold(0.0, f64::max),
        per_input,
        checked,
    })
}
