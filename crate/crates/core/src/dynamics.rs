//! Plain SGD on the adapter factors, the MSE objective, finite-difference
//! gradients, and the one-step trajectory comparison between the mixed
//! (`A·W·B`), merged (`Â·B` with `Â = A·W`) and fixed-orthogonal
//! parameterizations.

use crate::adapter::{Adapter, GradTriple};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Orthogonality tolerance `‖W·Wᵀ - I‖∞` for the fixed-orthogonal branch.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `(1 / (n·d2))·‖ŷ - y‖²_F`
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Learning rate.
    pub eta: f64,
    pub steps: usize,
    pub loss: LossKind,
    /// Full-batch SGD draws nothing at random; the seed travels with the run
    /// so reports can name it.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(eta: f64, steps: usize) -> Self {
        Self {
            eta,
            steps,
            loss: LossKind::Mse,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and > 0, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Inputs and regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x d1`
    pub x: Matrix,
    /// `n x d2`
    pub y: Matrix,
}

/// One SGD update. The mixer moves only when it is trainable.
pub fn sgd_step(adapter: &Adapter, grads: &GradTriple, eta: f64) -> Result<Adapter> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::Precondition(format!(
            "step size must be finite and >= 0, got {eta}"
        )));
    }
    for (name, g, p) in [
        ("gA", &grads.ga, adapter.a()),
        ("gW", &grads.gw, adapter.w()),
        ("gB", &grads.gb, adapter.b()),
    ] {
        if g.shape() != p.shape() {
            return Err(Error::Shape {
                op: name,
                left: g.shape(),
                right: p.shape(),
            });
        }
    }
    let a = adapter.a().sub(&grads.ga.scale(eta)?)?;
    let b = adapter.b().sub(&grads.gb.scale(eta)?)?;
    let w = if adapter.w_trainable() {
        adapter.w().sub(&grads.gw.scale(eta)?)?
    } else {
        adapter.w().clone()
    };
    adapter.with_factors(a, w, b)
}

fn check_data(adapter: &Adapter, w0: &Matrix, x: &Matrix, y: &Matrix) -> Result<()> {
    let cfg = adapter.config();
    if w0.shape() != (cfg.d1, cfg.d2) {
        return Err(Error::Shape {
            op: "base weight",
            left: w0.shape(),
            right: (cfg.d1, cfg.d2),
        });
    }
    if x.cols() != cfg.d1 || y.cols() != cfg.d2 || x.rows() != y.rows() {
        return Err(Error::Shape {
            op: "dataset",
            left: x.shape(),
            right: y.shape(),
        });
    }
    Ok(())
}

/// MSE loss of `x·(W0 + s·A·W·B)` against `y`.
pub fn mse_loss(adapter: &Adapter, w0: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64> {
    check_data(adapter, w0, x, y)?;
    let residual = adapter.forward(w0, x)?.sub(y)?;
    let n = (y.rows() * y.cols()) as f64;
    let loss = residual.data().iter().map(|v| v * v).sum::<f64>() / n;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite("mse_loss"))
    }
}

/// MSE loss and its gradient with respect to the merged weight,
/// `(2 / (n·d2))·xᵀ·(ŷ - y)`.
pub fn mse_loss_and_upstream(
    adapter: &Adapter,
    w0: &Matrix,
    x: &Matrix,
    y: &Matrix,
) -> Result<(f64, Matrix)> {
    check_data(adapter, w0, x, y)?;
    let residual = adapter.forward(w0, x)?.sub(y)?;
    let n = (y.rows() * y.cols()) as f64;
    let loss = residual.data().iter().map(|v| v * v).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("mse_loss"));
    }
    let delta = x.transpose().matmul(&residual)?.scale(2.0 / n)?;
    Ok((loss, delta))
}

/// Central-difference gradients of the MSE loss with respect to every entry
/// of `A`, `W` and `B`.
pub fn finite_diff_grads(
    adapter: &Adapter,
    w0: &Matrix,
    x: &Matrix,
    y: &Matrix,
    h: f64,
) -> Result<GradTriple> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Precondition(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    check_data(adapter, w0, x, y)?;

    #[derive(Clone, Copy)]
    enum Factor {
        A,
        W,
        B,
    }

    let probe = |factor: Factor, i: usize, j: usize, value: f64| -> Result<f64> {
        let (mut a, mut w, mut b) = (
            adapter.a().clone(),
            adapter.w().clone(),
            adapter.b().clone(),
        );
        match factor {
            Factor::A => a.set(i, j, value),
            Factor::W => w.set(i, j, value),
            Factor::B => b.set(i, j, value),
        }
        mse_loss(&adapter.with_factors(a, w, b)?, w0, x, y)
    };
    let central = |factor: Factor, m: &Matrix| -> Result<Matrix> {
        let mut g = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.get(i, j);
                let plus = probe(factor, i, j, v + h)?;
                let minus = probe(factor, i, j, v - h)?;
                g.set(i, j, (plus - minus) / (2.0 * h));
            }
        }
        Ok(g)
    };

    Ok(GradTriple {
        ga: central(Factor::A, adapter.a())?,
        gw: central(Factor::W, adapter.w())?,
        gb: central(Factor::B, adapter.b())?,
        w_inert: !adapter.w_trainable(),
    })
}

/// Branch weights after one SGD step from a shared `(A, W, B)` under three
/// parameterizations, plus the closed-form gap between the first two.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    /// `(A - ηΔBᵀWᵀ)(W - ηAᵀΔBᵀ)(B - ηWᵀAᵀΔ)`: all three factors learnable.
    pub w_lora: Matrix,
    /// `(AW - ηΔBᵀ)(B - ηWᵀAᵀΔ)`: `A·W` merged into one factor.
    pub w_hat: Matrix,
    /// `(A - ηΔBᵀWᵀ)·W·(B - ηWᵀAᵀΔ)`: mixer frozen.
    pub w_fixed_orth: Matrix,
    /// `w_hat - w_lora`, computed directly.
    pub diff_learnable_vs_merged: Matrix,
    /// `(η(A - ηΔBᵀWᵀ)AᵀΔBᵀ + ηΔBᵀ(WᵀW - I))(B - ηWᵀAᵀΔ)`.
    pub diff_closed_form: Matrix,
    /// `‖W·Wᵀ - I‖∞` of the supplied mixer.
    pub orthogonality_defect: f64,
}

impl TrajectoryReport {
    /// Whether the supplied mixer was orthogonal within [`ORTHOGONALITY_TOL`].
    pub fn fixed_orth_valid(&self) -> bool {
        self.orthogonality_defect <= ORTHOGONALITY_TOL
    }

    /// The fixed-mixer branch, or a precondition error when the mixer was
    /// not orthogonal.
    pub fn fixed_orth_checked(&self) -> Result<&Matrix> {
        if self.fixed_orth_valid() {
            Ok(&self.w_fixed_orth)
        } else {
            Err(Error::Precondition(format!(
                "fixed mixer is not orthogonal: ‖WWᵀ - I‖∞ = {:e}",
                self.orthogonality_defect
            )))
        }
    }
}

pub fn one_step_trajectory(
    a: &Matrix,
    w: &Matrix,
    b: &Matrix,
    delta: &Matrix,
    eta: f64,
) -> Result<TrajectoryReport> {
    if !w.is_square() {
        return Err(Error::NotSquare {
            op: "one_step_trajectory",
            shape: w.shape(),
        });
    }
    let r = w.rows();
    if a.cols() != r || b.rows() != r || delta.shape() != (a.rows(), b.cols()) {
        return Err(Error::Precondition(format!(
            "inconsistent shapes: A {:?}, W {:?}, B {:?}, delta {:?}",
            a.shape(),
            w.shape(),
            b.shape(),
            delta.shape()
        )));
    }
    if !eta.is_finite() {
        return Err(Error::Precondition(format!(
            "learning rate must be finite, got {eta}"
        )));
    }

    let (at, bt, wt) = (a.transpose(), b.transpose(), w.transpose());
    let eye = Matrix::identity(r);

    let delta_bt = delta.matmul(&bt)?; // ΔBᵀ
    let at_delta = at.matmul(delta)?; // AᵀΔ
    let a_next = a.sub(&delta_bt.matmul(&wt)?.scale(eta)?)?;
    let w_next = w.sub(&at_delta.matmul(&bt)?.scale(eta)?)?;
    let b_next = b.sub(&wt.matmul(&at_delta)?.scale(eta)?)?;

    let w_lora = a_next.matmul(&w_next)?.matmul(&b_next)?;
    let w_hat = a.matmul(w)?.sub(&delta_bt.scale(eta)?)?.matmul(&b_next)?;
    let w_fixed_orth = a_next.matmul(w)?.matmul(&b_next)?;

    let left = a_next
        .matmul(&at_delta)?
        .matmul(&bt)?
        .scale(eta)?
        .add(&delta_bt.matmul(&wt.matmul(w)?.sub(&eye)?)?.scale(eta)?)?;
    let diff_closed_form = left.matmul(&b_next)?;
    let diff_learnable_vs_merged = w_hat.sub(&w_lora)?;
    let orthogonality_defect = w.matmul(&wt)?.max_abs_diff(&eye)?;

    Ok(TrajectoryReport {
        w_lora,
        w_hat,
        w_fixed_orth,
        diff_learnable_vs_merged,
        diff_closed_form,
        orthogonality_defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    /// Frobenius norms of the three gradients at this step.
    pub grad_norm_a: f64,
    pub grad_norm_w: f64,
    pub grad_norm_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// First step whose loss or update was non-finite.
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Step 0 is the untouched initial adapter.
    pub records: Vec<StepRecord>,
    pub final_adapter: Adapter,
    pub divergence: Option<Divergence>,
}

impl TrainLog {
    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.records.iter().map(|r| r.loss).reduce(f64::min)
    }

    /// First step whose loss is at most `fraction` of the step-0 loss.
    pub fn steps_to_fraction(&self, fraction: f64) -> Option<usize> {
        let start = self.initial_loss()?;
        self.records
            .iter()
            .find(|r| r.loss <= fraction * start)
            .map(|r| r.step)
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }
}

/// Full-batch SGD on the MSE objective for `cfg.steps` updates.
///
/// A non-finite loss or update ends the run early with a [`Divergence`]
/// instead of an error.
pub fn train(
    adapter: &Adapter,
    w0: &Matrix,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_data(adapter, w0, &data.x, &data.y)?;

    let mut current = adapter.clone();
    let mut records = Vec::with_capacity(cfg.steps + 1);
    let diverged = |step: usize, e: Error| -> Result<Divergence> {
        match e {
            Error::NonFinite(op) => Ok(Divergence {
                step,
                reason: format!("non-finite value in {op}"),
            }),
            other => Err(other),
        }
    };

    for step in 0..=cfg.steps {
        let evaluated = mse_loss_and_upstream(&current, w0, &data.x, &data.y)
            .and_then(|(loss, delta)| Ok((loss, current.grad(&delta)?)));
        let (loss, grads) = match evaluated {
            Ok(v) => v,
            Err(e) => {
                let divergence = Some(diverged(step, e)?);
                return Ok(TrainLog {
                    records,
                    final_adapter: current,
                    divergence,
                });
            }
        };
        records.push(StepRecord {
            step,
            loss,
            grad_norm_a: grads.ga.frobenius_norm(),
            grad_norm_w: grads.gw.frobenius_norm(),
            grad_norm_b: grads.gb.frobenius_norm(),
        });
        if step == cfg.steps {
            break;
        }
        current = match sgd_step(&current, &grads, cfg.eta) {
            Ok(next) => next,
            Err(e) => {
                let divergence = Some(diverged(step + 1, e)?);
                return Ok(TrainLog {
                    records,
                    final_adapter: current,
                    divergence,
                });
            }
        };
    }

    Ok(TrainLog {
        records,
        final_adapter: current,
        divergence: None,
    })
}
