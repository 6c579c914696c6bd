//! Adaptive Dormand–Prince 5(4) integrator with dense output and event
//! location.
//!
//! The coefficients are the classic DOPRI5 pair together with its 4th-order
//! continuous extension, so solutions can be sampled at arbitrary times
//! between accepted steps (used for time slices, event bisection and tail
//! fits). Events are located by sign-change bracketing on the dense output.

use thiserror::Error;

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]);
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventDirection {
    Any,
    Rising,
    Falling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventAction {
    Stop,
    Continue,
}

pub struct EventSpec<'a, const N: usize> {
    pub eval: Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>,
    pub direction: EventDirection,
    pub action: EventAction,
}

#[derive(Clone, Copy, Debug)]
pub struct EventHit<const N: usize> {
    pub index: usize,
    pub t: f64,
    pub y: [f64; N],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    TEndReached,
    EventStop(usize),
    /// The controller pushed the step below the representable floor; the
    /// integration ends gracefully at the last accepted point. This is the
    /// expected exit for trajectories that compress infinite coordinate time
    /// into finite affine parameter (horizon-hugging tails).
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size control failed: error estimate not finite at t={0}")]
    NonFiniteError(f64),
}

/// One accepted step plus everything needed to evaluate inside it.
#[derive(Clone, Debug)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let th1 = 1.0 - theta;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.rcont[0][i]
                + theta
                    * (self.rcont[1][i]
                        + th1
                            * (self.rcont[2][i]
                                + theta * (self.rcont[3][i] + th1 * self.rcont[4][i])));
        }
        out
    }
}

#[derive(Debug)]
pub struct Solution<const N: usize> {
    pub ts: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub dense: Vec<DenseStep<N>>,
    pub events: Vec<EventHit<N>>,
    pub stop: StopReason,
    pub steps_taken: usize,
}

impl<const N: usize> Solution<N> {
    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn y_end(&self) -> [f64; N] {
        *self.ys.last().unwrap()
    }

    /// Evaluate the dense output at `t` (must lie within the solved span).
    pub fn eval(&self, t: f64) -> [f64; N] {
        debug_assert!(!self.dense.is_empty());
        let last = self.dense.len() - 1;
        let idx = self
            .dense
            .partition_point(|d| d.t1() < t)
            .min(last);
        self.dense[idx].eval(t)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.ts[0], self.t_end())
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

pub struct Integrator {
    pub tol: Tolerances,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for Integrator {
    fn default() -> Self {
        Self { tol: Tolerances::default(), max_steps: 2_000_000, initial_step: None }
    }
}

impl Integrator {
    pub fn with_tol(rel: f64, abs: f64) -> Self {
        Self { tol: Tolerances { rel, abs }, ..Self::default() }
    }

    /// Integrate from `t0` to `t_end` (t_end > t0), recording every accepted
    /// step and locating the given events.
    pub fn solve<const N: usize, S: OdeSystem<N>>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64; N],
        t_end: f64,
        events: &mut [EventSpec<'_, N>],
    ) -> Result<Solution<N>, OdeError> {
        let mut t = t0;
        let mut y = *y0;
        let mut k1 = [0.0; N];
        sys.rhs(t, &y, &mut k1);

        let mut h = self.initial_step.unwrap_or_else(|| initial_guess(&y, &k1, self.tol));
        h = h.min(t_end - t0);

        let mut sol = Solution {
            ts: vec![t],
            ys: vec![y],
            dense: Vec::new(),
            events: Vec::new(),
            stop: StopReason::MaxSteps,
            steps_taken: 0,
        };
        let mut g_prev: Vec<f64> = events.iter().map(|e| (e.eval)(t, &y)).collect();

        let mut stages = [[0.0; N]; 7];
        for _ in 0..self.max_steps {
            if t >= t_end {
                sol.stop = StopReason::TEndReached;
                return Ok(sol);
            }
            h = h.min(t_end - t);
            if h <= t.abs().max(1.0) * 4.0 * f64::EPSILON {
                sol.stop = StopReason::StepUnderflow;
                return Ok(sol);
            }

            stages[0] = k1;
            let mut ytmp = [0.0; N];
            for s in 1..7 {
                for i in 0..N {
                    let mut acc = 0.0;
                    for (j, stage) in stages.iter().enumerate().take(s) {
                        acc += A[s][j] * stage[i];
                    }
                    ytmp[i] = y[i] + h * acc;
                }
                let mut ks = [0.0; N];
                sys.rhs(t + C[s] * h, &ytmp, &mut ks);
                stages[s] = ks;
            }
            // 5th-order solution is the last stage evaluation point (FSAL).
            let y1 = ytmp;
            let k7 = stages[6];

            let mut err = 0.0_f64;
            for i in 0..N {
                let mut e = 0.0;
                for (j, stage) in stages.iter().enumerate() {
                    e += E[j] * stage[i];
                }
                e *= h;
                let sc = self.tol.abs + self.tol.rel * y[i].abs().max(y1[i].abs());
                err += (e / sc) * (e / sc);
            }
            err = (err / N as f64).sqrt();
            if !err.is_finite() {
                return Err(OdeError::NonFiniteError(t));
            }

            if err <= 1.0 {
                // Accepted: build the dense-output polynomial.
                let mut rcont = [[0.0; N]; 5];
                for i in 0..N {
                    let dy = y1[i] - y[i];
                    let bspl = h * stages[0][i] - dy;
                    rcont[0][i] = y[i];
                    rcont[1][i] = dy;
                    rcont[2][i] = bspl;
                    rcont[3][i] = dy - h * k7[i] - bspl;
                    let mut acc = 0.0;
                    for (j, stage) in stages.iter().enumerate() {
                        acc += D[j] * stage[i];
                    }
                    rcont[4][i] = h * acc;
                }
                let step = DenseStep { t0: t, h, rcont };

                let t_new = t + h;
                let mut stop_at: Option<(usize, f64, [f64; N])> = None;
                for (ei, ev) in events.iter().enumerate() {
                    let g_new = (ev.eval)(t_new, &y1);
                    let crossed = match ev.direction {
                        EventDirection::Any => g_prev[ei] * g_new < 0.0,
                        EventDirection::Rising => g_prev[ei] < 0.0 && g_new >= 0.0,
                        EventDirection::Falling => g_prev[ei] > 0.0 && g_new <= 0.0,
                    };
                    if crossed {
                        let (te, ye) = bisect_event(&step, &ev.eval, t, t_new);
                        match ev.action {
                            EventAction::Stop => {
                                if stop_at.map_or(true, |(_, ts, _)| te < ts) {
                                    stop_at = Some((ei, te, ye));
                                }
                            }
                            EventAction::Continue => {
                                sol.events.push(EventHit { index: ei, t: te, y: ye });
                            }
                        }
                    }
                    g_prev[ei] = g_new;
                }

                if let Some((ei, te, ye)) = stop_at {
                    sol.events.push(EventHit { index: ei, t: te, y: ye });
                    sol.dense.push(step);
                    sol.ts.push(te);
                    sol.ys.push(ye);
                    sol.steps_taken += 1;
                    sol.stop = StopReason::EventStop(ei);
                    return Ok(sol);
                }

                sol.dense.push(step);
                t = t_new;
                y = y1;
                k1 = k7;
                sol.ts.push(t);
                sol.ys.push(y);
                sol.steps_taken += 1;

                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
                h *= fac;
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h *= fac;
            }
        }
        Ok(sol)
    }
}

fn initial_guess<const N: usize>(y: &[f64; N], dydt: &[f64; N], tol: Tolerances) -> f64 {
    let mut d0 = 0.0_f64;
    let mut d1 = 0.0_f64;
    for i in 0..N {
        let sc = tol.abs + tol.rel * y[i].abs();
        d0 += (y[i] / sc) * (y[i] / sc);
        d1 += (dydt[i] / sc) * (dydt[i] / sc);
    }
    let (d0, d1) = (d0.sqrt(), d1.sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).min(1.0)
    }
}

fn bisect_event<const N: usize>(
    step: &DenseStep<N>,
    g: &dyn Fn(f64, &[f64; N]) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> (f64, [f64; N]) {
    let g_lo = g(lo, &step.eval(lo));
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y_mid = step.eval(mid);
        let g_mid = g(mid, &y_mid);
        if g_mid == 0.0 {
            return (mid, y_mid);
        }
        if (g_lo < 0.0) == (g_mid < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, step.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Shm;
    impl OdeSystem<2> for Shm {
        fn rhs(&self, _t: f64, y: &[f64; 2], dydt: &mut [f64; 2]) {
            dydt[0] = y[1];
            dydt[1] = -y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let ig = Integrator::with_tol(1e-12, 1e-14);
        let sol = ig.solve(&Shm, 0.0, &[1.0, 0.0], 10.0, &mut []).unwrap();
        let y = sol.y_end();
        assert!((y[0] - 10.0_f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10.0_f64.sin()).abs() < 1e-9);
        assert_eq!(sol.stop, StopReason::TEndReached);
    }

    #[test]
    fn dense_output_accuracy() {
        let ig = Integrator::with_tol(1e-11, 1e-13);
        let sol = ig.solve(&Shm, 0.0, &[1.0, 0.0], 6.0, &mut []).unwrap();
        let mut t = 0.05;
        while t < 6.0 {
            let y = sol.eval(t);
            assert!((y[0] - t.cos()).abs() < 1e-8, "t={t}");
            t += 0.13;
        }
    }

    #[test]
    fn event_location() {
        // First zero of cos(t) is at pi/2.
        let ig = Integrator::with_tol(1e-12, 1e-14);
        let mut evs = [EventSpec::<2> {
            eval: Box::new(|_t, y| y[0]),
            direction: EventDirection::Any,
            action: EventAction::Stop,
        }];
        let sol = ig.solve(&Shm, 0.0, &[1.0, 0.0], 10.0, &mut evs).unwrap();
        assert_eq!(sol.stop, StopReason::EventStop(0));
        let hit = sol.events[0];
        assert!((hit.t - std::f64::consts::FRAC_PI_2).abs() < 1e-11, "t={}", hit.t);
    }

    struct Decay;
    impl OdeSystem<1> for Decay {
        fn rhs(&self, _t: f64, y: &[f64; 1], dydt: &mut [f64; 1]) {
            dydt[0] = -y[0];
        }
    }

    #[test]
    fn continue_events_collected() {
        let ig = Integrator::default();
        let mut evs = [EventSpec::<1> {
            eval: Box::new(|_t, y| y[0] - 0.5),
            direction: EventDirection::Falling,
            action: EventAction::Continue,
        }];
        let sol = ig.solve(&Decay, 0.0, &[1.0], 3.0, &mut evs).unwrap();
        assert_eq!(sol.events.len(), 1);
        assert!((sol.events[0].t - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(sol.stop, StopReason::TEndReached);
    }
}
