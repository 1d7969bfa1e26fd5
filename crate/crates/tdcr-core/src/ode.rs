//! Explicit Dormand-Prince 5(4) integration with dense output.
//!
//! Classic embedded Runge-Kutta pair with the first-same-as-last property,
//! an RMS error norm over `atol + rtol * |y|`, and the standard step-size
//! controller. The solver object carries its step size across calls so a
//! simulation driven in short control-tick bursts does not pay the
//! initial-step search on every tick. Each accepted step exposes a quartic
//! dense interpolant, which the simulation uses to log at arbitrary output
//! rates without constraining the step sequence.

use nalgebra::DVector;

use crate::{Error, Result};

// Butcher tableau of the Dormand-Prince 5(4) pair.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th- and 4th-order weights (error estimator).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Smallest step size before the solver gives up (s).
pub const MIN_STEP: f64 = 1e-12;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Quartic interpolant over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    t0: f64,
    h: f64,
    r1: DVector<f64>,
    r2: DVector<f64>,
    r3: DVector<f64>,
    r4: DVector<f64>,
    r5: DVector<f64>,
}

impl DenseStep {
    /// Start of the step interval.
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    /// End of the step interval.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    /// Evaluates the interpolant; `t` should lie within the step interval.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let theta = (t - self.t0) / self.h;
        let omt = 1.0 - theta;
        let inner = &self.r4 + &self.r5 * omt;
        let mid = &self.r3 + inner * theta;
        &self.r1 + (&self.r2 + mid * omt) * theta
    }
}

/// Dormand-Prince 5(4) solver with persistent step-size memory.
#[derive(Debug, Clone)]
pub struct Dp45 {
    rtol: f64,
    atol: f64,
    h: Option<f64>,
}

impl Dp45 {
    pub fn new(rtol: f64, atol: f64) -> Result<Self> {
        if !(rtol > 0.0 && atol > 0.0 && rtol.is_finite() && atol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive and finite, got rtol={rtol} atol={atol}"
            )));
        }
        Ok(Dp45 {
            rtol,
            atol,
            h: None,
        })
    }

    /// Step size the next call will start from, once one has been accepted.
    pub fn step_size(&self) -> Option<f64> {
        self.h
    }

    /// Forgets the carried step size.
    pub fn reset(&mut self) {
        self.h = None;
    }

    fn error_norm(&self, err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..err.len() {
            let sc = self.atol + self.rtol * y0[i].abs().max(y1[i].abs());
            let q = err[i] / sc;
            acc += q * q;
        }
        (acc / err.len() as f64).sqrt()
    }

    /// Hairer's starting-step heuristic.
    fn initial_step<F>(&self, f: &mut F, t0: f64, y0: &DVector<f64>, f0: &DVector<f64>, span: f64) -> Result<f64>
    where
        F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    {
        let sc = |y: &DVector<f64>, i: usize| self.atol + self.rtol * y[i].abs();
        let n = y0.len() as f64;
        let d0 = (y0.iter().enumerate().map(|(i, v)| (v / sc(y0, i)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (f0.iter().enumerate().map(|(i, v)| (v / sc(y0, i)).powi(2)).sum::<f64>() / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(span);
        let y1 = y0 + f0 * h0;
        let f1 = f(t0 + h0, &y1)?;
        let d2 = ((0..y0.len())
            .map(|i| ((f1[i] - f0[i]) / sc(y0, i)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`, invoking `observe`
    /// with the dense interpolant of every accepted step (intervals tile
    /// `[t0, t1]` exactly). Returns the state at `t1`.
    pub fn propagate<F, O>(
        &mut self,
        f: &mut F,
        t0: f64,
        y0: &DVector<f64>,
        t1: f64,
        mut observe: O,
    ) -> Result<DVector<f64>>
    where
        F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
        O: FnMut(&DenseStep) -> Result<()>,
    {
        if t1 < t0 || t0.is_nan() || t1.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "integration span must run forward, got t0={t0} t1={t1}"
            )));
        }
        if t1 == t0 {
            return Ok(y0.clone());
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "integration state",
                time: t0,
            });
        }

        let mut t = t0;
        let mut y = y0.clone();
        let mut k1 = f(t, &y)?;
        if k1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "time derivative",
                time: t,
            });
        }
        let mut h = match self.h {
            Some(h) => h.min(t1 - t0),
            None => self.initial_step(f, t0, &y, &k1, t1 - t0)?,
        };
        let mut rejected_last = false;
        let mut ks: [DVector<f64>; 7] = [
            k1.clone(),
            DVector::zeros(y.len()),
            DVector::zeros(y.len()),
            DVector::zeros(y.len()),
            DVector::zeros(y.len()),
            DVector::zeros(y.len()),
            DVector::zeros(y.len()),
        ];

        loop {
            if h < MIN_STEP {
                return Err(Error::StepSizeUnderflow { time: t, step: h });
            }
            let last = t + h >= t1;
            let h_eff = if last { t1 - t } else { h };

            ks[0] = k1.clone();
            let mut failed = false;
            for stage in 1..7 {
                let mut yi = y.clone();
                for (j, a) in A[stage - 1].iter().enumerate().take(stage) {
                    if *a != 0.0 {
                        yi += &ks[j] * (h_eff * *a);
                    }
                }
                ks[stage] = f(t + C[stage] * h_eff, &yi)?;
                if ks[stage].iter().any(|v| !v.is_finite()) {
                    failed = true;
                    break;
                }
            }

            let (err, y_new) = if failed {
                (f64::INFINITY, y.clone())
            } else {
                // 5th-order solution = stage-7 argument (FSAL), already the
                // combination with the a7 row = b weights.
                let mut y_new = y.clone();
                for (j, a) in A[5].iter().enumerate() {
                    if *a != 0.0 {
                        y_new += &ks[j] * (h_eff * *a);
                    }
                }
                let mut err_vec = DVector::zeros(y.len());
                for (j, e) in E.iter().enumerate() {
                    if *e != 0.0 {
                        err_vec += &ks[j] * (h_eff * *e);
                    }
                }
                let e = self.error_norm(&err_vec, &y, &y_new);
                (if e.is_finite() { e } else { f64::INFINITY }, y_new)
            };

            if err <= 1.0 {
                // Accepted: build the dense interpolant and advance.
                let ydiff = &y_new - &y;
                let bspl = &ks[0] * h_eff - &ydiff;
                let r5 = (&ks[0] * D1
                    + &ks[2] * D3
                    + &ks[3] * D4
                    + &ks[4] * D5
                    + &ks[5] * D6
                    + &ks[6] * D7)
                    * h_eff;
                let dense = DenseStep {
                    t0: t,
                    h: h_eff,
                    r1: y.clone(),
                    r2: ydiff.clone(),
                    r3: bspl.clone(),
                    r4: &ydiff - &ks[6] * h_eff - bspl,
                    r5,
                };
                observe(&dense)?;

                k1 = ks[6].clone(); // FSAL
                y = y_new;
                t += h_eff;

                let fac = if err == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
                };
                let fac = if rejected_last { fac.min(1.0) } else { fac };
                h = h_eff * fac;
                rejected_last = false;
                self.h = Some(h);

                if last {
                    return Ok(y);
                }
            } else {
                let fac = if err.is_finite() {
                    (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
                } else {
                    FAC_MIN
                };
                h = h_eff * fac;
                rejected_last = true;
            }
        }
    }
}

/// One-shot integration without dense output.
pub fn integrate_dp45<F>(
    f: &mut F,
    t0: f64,
    y0: &DVector<f64>,
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    Dp45::new(rtol, atol)?.propagate(f, t0, y0, t1, |_| Ok(()))
}
