//! Generator and discriminator objectives with exact parameter gradients.
//!
//! The arbitrage penalties are evaluated on finite-difference probes of the
//! total variance `ω = G(x)²·T`. For every batch row four probe rows are
//! appended (adjusted log-moneyness ± h, maturity up/down) and the whole stack
//! goes through one train-mode forward pass, so the MSE rows and the probes see
//! the same batch-normalisation statistics and the gradient is that of the
//! penalty exactly as computed.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::features::{FeatureLayout, Task};
use crate::arbitrage::{
    butterfly_from_stencil, calendar_from_stencil, calendar_offsets, curvature_from_stencil, ArbitrageReport,
    PenaltyWeights, Probe,
};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{ForwardCache, Gradients, MlpNetwork, Mode};

/// Numeric guard on discriminator outputs before taking logarithms.
pub const D_CLAMP: f64 = 1e-7;

/// Which terms enter the generator objective and with what weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    pub weights: PenaltyWeights,
    pub probe_step: f64,
    pub mse_enabled: bool,
    pub constraints_enabled: bool,
}

impl LossSettings {
    pub fn coefficients(&self) -> LossCoefficients {
        let arb = if self.constraints_enabled { 1.0 } else { 0.0 };
        LossCoefficients {
            mse: if self.mse_enabled { 1.0 } else { 0.0 },
            calendar: arb * self.weights.lambda1,
            butterfly: arb * self.weights.lambda2,
            large_moneyness: arb * self.weights.lambda3,
            adversarial: self.weights.lambda4,
        }
    }
}

/// Effective multipliers of the generator loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub mse: f64,
    pub calendar: f64,
    pub butterfly: f64,
    pub large_moneyness: f64,
    pub adversarial: f64,
}

/// Unweighted components of one generator-loss evaluation plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub total: f64,
    pub mse: f64,
    pub calendar: f64,
    pub butterfly: f64,
    pub large_moneyness: f64,
    /// `−mean ln D(Z̄, G(Z̄))`; zero when no discriminator takes part.
    pub adversarial: f64,
    /// Probe points whose total variance was not positive.
    pub skipped_butterfly: usize,
    pub coefficients: LossCoefficients,
}

impl GeneratorLoss {
    /// Weighted sum of the components, which is how `total` is formed.
    pub fn recombined(&self) -> f64 {
        let c = &self.coefficients;
        c.mse * self.mse
            + c.calendar * self.calendar
            + c.butterfly * self.butterfly
            + c.large_moneyness * self.large_moneyness
            + c.adversarial * self.adversarial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorLoss {
    pub total: f64,
    /// `−mean ln D(X, y)`.
    pub real: f64,
    /// `−mean ln(1 − D(X, G(X)))`.
    pub fake: f64,
}

/// Rows `[x; x(k+h); x(k−h); x(T+up); x(T−down)]` and each row's calendar span.
fn probe_stack(x: &Array2<f64>, layout: &FeatureLayout, h: f64) -> Result<(Array2<f64>, Vec<f64>)> {
    let b = x.nrows();
    let mut stack = concatenate(Axis(0), &[x.view(), x.view(), x.view(), x.view(), x.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let probe = Probe::with_step(h);
    let mut spans = Vec::with_capacity(b);
    for i in 0..b {
        let (k_log, t, r) = (x[[i, layout.k_log]], x[[i, layout.t]], x[[i, layout.r]]);
        let (up, down) = calendar_offsets(t, &probe)?;
        spans.push(up + down);
        let shifted = [(k_log + h, t), (k_log - h, t), (k_log, t + up), (k_log, t - down)];
        for (block, (kl, tt)) in shifted.into_iter().enumerate() {
            let row = (block + 1) * b + i;
            stack[[row, layout.k_log]] = kl;
            stack[[row, layout.t]] = tt;
            stack[[row, layout.k]] = (kl + r * tt).exp();
        }
    }
    Ok((stack, spans))
}

/// Stencil functionals of one row with partials with respect to the five network outputs.
struct RowStencil {
    l_cal: f64,
    d_cal: [f64; 5],
    /// `None` when `ω ≤ 0` at the centre.
    l_but: Option<(f64, [f64; 5])>,
    curvature: (f64, [f64; 5]),
}

fn row_stencil(out: [f64; 5], times: [f64; 5], k_log: f64, h: f64, span: f64) -> RowStencil {
    let w: [f64; 5] = std::array::from_fn(|j| out[j] * out[j] * times[j]);
    let dw: [f64; 5] = std::array::from_fn(|j| 2.0 * out[j] * times[j]);
    let (l_cal, gc) = calendar_from_stencil(w[3], w[4], span);
    let d_cal = [0.0, 0.0, 0.0, gc[0] * dw[3], gc[1] * dw[4]];
    let (curv, gk) = curvature_from_stencil(w[0], w[1], w[2], h);
    let curvature = (curv, [gk[0] * dw[0], gk[1] * dw[1], gk[2] * dw[2], 0.0, 0.0]);
    let l_but = (w[0] > 0.0).then(|| {
        let (l, gb) = butterfly_from_stencil(k_log, w[0], w[1], w[2], h);
        (l, [gb[0] * dw[0], gb[1] * dw[1], gb[2] * dw[2], 0.0, 0.0])
    });
    RowStencil { l_cal, d_cal, l_but, curvature }
}

fn gather(col: &ArrayView1<f64>, b: usize, i: usize) -> [f64; 5] {
    std::array::from_fn(|j| col[j * b + i])
}

/// Concatenates features and a volatility column into discriminator input.
pub fn discriminator_input(x: &Array2<f64>, vol: &ArrayView1<f64>) -> Result<Array2<f64>> {
    if x.nrows() != vol.len() {
        return Err(Error::Shape(format!("{} feature rows vs {} volatilities", x.nrows(), vol.len())));
    }
    concatenate(Axis(1), &[x.view(), vol.view().insert_axis(Axis(1))]).map_err(|e| Error::Shape(e.to_string()))
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < D_CLAMP {
        (D_CLAMP, false)
    } else if p > 1.0 - D_CLAMP {
        (1.0 - D_CLAMP, false)
    } else {
        (p, true)
    }
}

fn check_batch(gen: &MlpNetwork, task: Task, x: &Array2<f64>, y: &Array1<f64>) -> Result<()> {
    let dim = task.layout().dim;
    if x.ncols() != dim || gen.input_dim() != dim || gen.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "{task} task needs {dim} features and a scalar generator (batch {}, generator {}→{})",
            x.ncols(),
            gen.input_dim(),
            gen.output_dim()
        )));
    }
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::Shape(format!("batch has {} rows and {} targets", x.nrows(), y.len())));
    }
    Ok(())
}

/// Generator objective `MSE + λ₁L_c + λ₂L_bf + λ₃L_∞ + λ₄L_DG` and its gradient.
///
/// The adversarial term is evaluated only when both `disc` and `noise` are given.
/// Returns the train-mode cache of the probe-stacked pass so the caller can fold
/// its batch statistics into the running statistics.
pub fn generator_loss(
    gen: &MlpNetwork,
    disc: Option<&MlpNetwork>,
    task: Task,
    x: &Array2<f64>,
    y: &Array1<f64>,
    noise: Option<&Array2<f64>>,
    settings: &LossSettings,
) -> Result<(GeneratorLoss, Gradients, ForwardCache)> {
    check_batch(gen, task, x, y)?;
    let layout = task.layout();
    let coef = settings.coefficients();
    let h = settings.probe_step;
    let b = x.nrows();
    let bf = b as f64;

    let (stack, spans) = probe_stack(x, &layout, h)?;
    let (out, cache) = gen.forward(&stack, Mode::Train)?;
    let o = out.column(0);
    let t_col = stack.column(layout.t);
    let mut upstream = Array2::<f64>::zeros((5 * b, 1));

    let mut mse = 0.0;
    for i in 0..b {
        let e = o[i] - y[i];
        mse += e * e;
        upstream[[i, 0]] += coef.mse * 2.0 * e / bf;
    }
    mse /= bf;

    let (mut cal, mut but, mut curv, mut skipped) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..b {
        let st = row_stencil(gather(&o, b, i), gather(&t_col, b, i), x[[i, layout.k_log]], h, spans[i]);
        let mut add = |scale: f64, grads: &[f64; 5]| {
            for (j, g) in grads.iter().enumerate() {
                upstream[[j * b + i, 0]] += scale * g / bf;
            }
        };
        if st.l_cal < 0.0 {
            cal -= st.l_cal;
            add(-coef.calendar, &st.d_cal);
        }
        match st.l_but {
            Some((l, g)) if l < 0.0 => {
                but -= l;
                add(-coef.butterfly, &g);
            }
            Some(_) => {}
            None => skipped += 1,
        }
        curv += st.curvature.0;
        add(coef.large_moneyness, &st.curvature.1);
    }
    let (cal, but, curv) = (cal / bf, but / bf, curv / bf);

    let (mut grads, _) = gen.backward(&cache, &upstream)?;

    let mut adversarial = 0.0;
    if let (Some(d), Some(z)) = (disc, noise) {
        if z.ncols() != layout.dim || z.nrows() < 2 {
            return Err(Error::Shape(format!("noise batch {:?} does not fit the {task} task", z.dim())));
        }
        let nz = z.nrows() as f64;
        let (gz, gz_cache) = gen.forward(z, Mode::Train)?;
        let d_in = discriminator_input(z, &gz.column(0))?;
        let (p, d_cache) = d.forward(&d_in, Mode::Train)?;
        let mut dp = Array2::<f64>::zeros(p.raw_dim());
        for (i, &pi) in p.column(0).iter().enumerate() {
            let (pc, live) = clamp_prob(pi);
            adversarial -= pc.ln() / nz;
            if live {
                dp[[i, 0]] = -coef.adversarial / (nz * pc);
            }
        }
        if coef.adversarial != 0.0 {
            let (_, d_dx) = d.backward(&d_cache, &dp)?;
            let dg = d_dx.slice(s![.., layout.dim..layout.dim + 1]).to_owned();
            let (g_adv, _) = gen.backward(&gz_cache, &dg)?;
            grads.add_scaled(&g_adv, 1.0);
        }
    }

    let mut loss = GeneratorLoss {
        total: 0.0,
        mse,
        calendar: cal,
        butterfly: but,
        large_moneyness: curv,
        adversarial,
        skipped_butterfly: skipped,
        coefficients: coef,
    };
    loss.total = ensure_finite(loss.recombined(), "generator loss")?;
    Ok((loss, grads, cache))
}

/// Binary cross-entropy of the discriminator on real `{X, y}` and fake `{X, G(X)}` rows.
///
/// The generator runs in train mode and is not modified. Returns the gradient
/// with respect to the discriminator parameters and the train-mode cache of the
/// real-sample pass.
pub fn discriminator_loss(
    gen: &MlpNetwork,
    disc: &MlpNetwork,
    task: Task,
    x: &Array2<f64>,
    y: &Array1<f64>,
) -> Result<(DiscriminatorLoss, Gradients, ForwardCache)> {
    check_batch(gen, task, x, y)?;
    if disc.input_dim() != x.ncols() + 1 || disc.output_dim() != 1 {
        return Err(Error::Shape("discriminator must map features plus volatility to a scalar".into()));
    }
    let n = x.nrows() as f64;
    let fake_vol = gen.forward(x, Mode::Train)?.0;

    let bce = |input: Array2<f64>, real: bool| -> Result<(f64, Gradients, ForwardCache)> {
        let (p, cache) = disc.forward(&input, Mode::Train)?;
        let mut dp = Array2::<f64>::zeros(p.raw_dim());
        let mut loss = 0.0;
        for (i, &pi) in p.column(0).iter().enumerate() {
            let (pc, live) = clamp_prob(pi);
            if real {
                loss -= pc.ln() / n;
                if live {
                    dp[[i, 0]] = -1.0 / (n * pc);
                }
            } else {
                loss -= (1.0 - pc).ln() / n;
                if live {
                    dp[[i, 0]] = 1.0 / (n * (1.0 - pc));
                }
            }
        }
        let (g, _) = disc.backward(&cache, &dp)?;
        Ok((loss, g, cache))
    };
    let (real, mut grads, real_cache) = bce(discriminator_input(x, &y.view())?, true)?;
    let (fake, g_fake, _) = bce(discriminator_input(x, &fake_vol.column(0))?, false)?;
    grads.add_scaled(&g_fake, 1.0);
    let total = ensure_finite(real + fake, "discriminator loss")?;
    Ok((DiscriminatorLoss { total, real, fake }, grads, real_cache))
}

/// Probe-based violation counts of an eval-mode generator at the rows of `x`.
///
/// Uses the same stencils as the training penalty. Rows whose centre total
/// variance is not positive count as butterfly violations.
pub fn probe_violations(gen: &MlpNetwork, task: Task, x: &Array2<f64>, probe_step: f64) -> Result<ArbitrageReport> {
    let layout = task.layout();
    let mut report = ArbitrageReport::empty(x.nrows());
    const CHUNK: usize = 4096;
    for start in (0..x.nrows()).step_by(CHUNK) {
        let xc = x.slice(s![start..(start + CHUNK).min(x.nrows()), ..]).to_owned();
        let b = xc.nrows();
        let (stack, spans) = probe_stack(&xc, &layout, probe_step)?;
        let out = gen.predict(&stack)?;
        let o = out.column(0);
        let t_col = stack.column(layout.t);
        for i in 0..b {
            let st = row_stencil(gather(&o, b, i), gather(&t_col, b, i), xc[[i, layout.k_log]], probe_step, spans[i]);
            report.record_calendar(st.l_cal);
            report.record_butterfly(st.l_but.map_or(f64::NEG_INFINITY, |(l, _)| l));
        }
    }
    Ok(report)
}
