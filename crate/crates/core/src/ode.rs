//! Fixed-step integration of the coupled velocity field.
//!
//! Forward (`t: 0 → 1`) turns noise into data while the label code dissolves;
//! backward (`t: 1 → 0`) recovers the label code of an observed point.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::codec::{mean_vector, ClassCodebook};
use crate::error::{check_dim, invalid, Error, Result};
use crate::flow::{CoupledState, CoupledVelocity, FlowModel};
use crate::nn::checkpoint::format_float;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Anything that yields a coupled velocity at a state.
pub trait VelocityField<S: Scalar> {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn velocity(&self, x: &[S], y: &[S], t: S) -> Result<CoupledVelocity<S>>;
}

impl<S: Scalar> VelocityField<S> for FlowModel<S> {
    fn dim_x(&self) -> usize {
        self.layout.dim_x
    }

    fn dim_y(&self) -> usize {
        self.layout.dim_y
    }

    fn velocity(&self, x: &[S], y: &[S], t: S) -> Result<CoupledVelocity<S>> {
        FlowModel::velocity(self, x, y, t)
    }
}

/// Closure-backed field, mostly for analytic test problems.
pub struct FnField<F> {
    pub dim_x: usize,
    pub dim_y: usize,
    pub f: F,
}

impl<S, F> VelocityField<S> for FnField<F>
where
    S: Scalar,
    F: Fn(&[S], &[S], S) -> CoupledVelocity<S>,
{
    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_y(&self) -> usize {
        self.dim_y
    }

    fn velocity(&self, x: &[S], y: &[S], t: S) -> Result<CoupledVelocity<S>> {
        Ok((self.f)(x, y, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Euler,
    Midpoint,
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Midpoint => "midpoint",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "midpoint" => Ok(Scheme::Midpoint),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(invalid("scheme", format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub steps: usize,
    pub record_trajectory: bool,
    /// Keep `x` fixed and advance only `y`. Off by default: both halves of
    /// the state move together.
    pub hold_x: bool,
}

impl Default for SolverConfig {
    /// 20 Euler steps.
    fn default() -> Self {
        Self {
            scheme: Scheme::Euler,
            steps: 20,
            record_trajectory: false,
            hold_x: false,
        }
    }
}

impl SolverConfig {
    pub fn euler(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn with_scheme(scheme: Scheme, steps: usize) -> Self {
        Self {
            scheme,
            steps,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<S> {
    pub states: Vec<CoupledState<S>>,
}

impl<S: Scalar> Trajectory<S> {
    /// CSV with columns `step,t,x0..,y0..`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t");
        if let Some(first) = self.states.first() {
            for c in 0..first.x.len() {
                let _ = write!(out, ",x{c}");
            }
            for c in 0..first.y.len() {
                let _ = write!(out, ",y{c}");
            }
        }
        out.push('\n');
        for (k, s) in self.states.iter().enumerate() {
            let _ = write!(out, "{k},{}", format_float(s.t.as_f64()));
            for v in s.x.iter().chain(&s.y) {
                let _ = write!(out, ",{}", format_float(v.as_f64()));
            }
            out.push('\n');
        }
        out
    }
}

/// Grid time `t_start + (t_end - t_start) · num / den`, computed from the
/// integer position so no rounding accumulates across steps.
fn grid_time<S: Scalar>(forward: bool, num: usize, den: usize) -> S {
    let frac = S::count(num) / S::count(den);
    if forward {
        frac
    } else {
        S::one() - frac
    }
}

struct Stepper<'a, S, F: ?Sized> {
    field: &'a F,
    hold_x: bool,
    _s: std::marker::PhantomData<S>,
}

impl<'a, S: Scalar, F: VelocityField<S> + ?Sized> Stepper<'a, S, F> {
    fn eval(&self, x: &[S], y: &[S], t: S) -> Result<CoupledVelocity<S>> {
        let mut v = self.field.velocity(x, y, t)?;
        if self.hold_x {
            v.x.iter_mut().for_each(|c| *c = S::zero());
        }
        Ok(v)
    }
}

fn offset<S: Scalar>(base: &[S], v: &[S], h: S) -> Vec<S> {
    base.iter().zip(v).map(|(&b, &d)| b + h * d).collect()
}

fn add_scaled<S: Scalar>(target: &mut [S], v: &[S], h: S) {
    for (a, &d) in target.iter_mut().zip(v) {
        *a += h * d;
    }
}

/// Integrates `d(x, y)/dt = v(x, y, t)` from `t_start` to `t_end` (one of
/// them 0, the other 1) in `config.steps` equal steps.
pub fn integrate<S, F>(
    field: &F,
    initial: &CoupledState<S>,
    t_start: S,
    t_end: S,
    config: &SolverConfig,
) -> Result<(CoupledState<S>, Option<Trajectory<S>>)>
where
    S: Scalar,
    F: VelocityField<S> + ?Sized,
{
    let forward = if t_start == S::zero() && t_end == S::one() {
        true
    } else if t_start == S::one() && t_end == S::zero() {
        false
    } else {
        return Err(invalid(
            "t_start/t_end",
            format!("must be 0 → 1 or 1 → 0, got {t_start} → {t_end}"),
        ));
    };
    if config.steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    check_dim("initial x", field.dim_x(), initial.x.len())?;
    check_dim("initial y", field.dim_y(), initial.y.len())?;

    let n = config.steps;
    let dt = {
        let h = S::one() / S::count(n);
        if forward {
            h
        } else {
            -h
        }
    };
    let half = dt / S::lit(2.0);
    let two = S::lit(2.0);
    let sixth = dt / S::lit(6.0);
    let stepper = Stepper {
        field,
        hold_x: config.hold_x,
        _s: std::marker::PhantomData,
    };

    let mut x = initial.x.clone();
    let mut y = initial.y.clone();
    let mut trajectory = config.record_trajectory.then(|| Trajectory {
        states: vec![CoupledState {
            x: x.clone(),
            y: y.clone(),
            t: grid_time(forward, 0, n),
        }],
    });

    for k in 0..n {
        let t = grid_time::<S>(forward, k, n);
        match config.scheme {
            Scheme::Euler => {
                let v = stepper.eval(&x, &y, t)?;
                add_scaled(&mut x, &v.x, dt);
                add_scaled(&mut y, &v.y, dt);
            }
            Scheme::Midpoint => {
                let k1 = stepper.eval(&x, &y, t)?;
                let t_mid = grid_time(forward, 2 * k + 1, 2 * n);
                let k2 = stepper.eval(&offset(&x, &k1.x, half), &offset(&y, &k1.y, half), t_mid)?;
                add_scaled(&mut x, &k2.x, dt);
                add_scaled(&mut y, &k2.y, dt);
            }
            Scheme::Rk4 => {
                let t_mid = grid_time(forward, 2 * k + 1, 2 * n);
                let t_next = grid_time(forward, k + 1, n);
                let k1 = stepper.eval(&x, &y, t)?;
                let k2 = stepper.eval(&offset(&x, &k1.x, half), &offset(&y, &k1.y, half), t_mid)?;
                let k3 = stepper.eval(&offset(&x, &k2.x, half), &offset(&y, &k2.y, half), t_mid)?;
                let k4 = stepper.eval(&offset(&x, &k3.x, dt), &offset(&y, &k3.y, dt), t_next)?;
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi += sixth * (k1.x[i] + two * k2.x[i] + two * k3.x[i] + k4.x[i]);
                }
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += sixth * (k1.y[i] + two * k2.y[i] + two * k3.y[i] + k4.y[i]);
                }
            }
        }
        let t_next = grid_time::<S>(forward, k + 1, n);
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                step: k + 1,
                t: t_next.as_f64(),
            });
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.states.push(CoupledState {
                x: x.clone(),
                y: y.clone(),
                t: t_next,
            });
        }
    }
    let final_state = CoupledState {
        x,
        y,
        t: t_end,
    };
    Ok((final_state, trajectory))
}

fn check_codebook<S: Scalar, F: VelocityField<S> + ?Sized>(
    field: &F,
    codebook: &ClassCodebook<S>,
) -> Result<()> {
    check_dim("codebook dim_y", field.dim_y(), codebook.dim_y())
}

/// Class-conditional samples: `x(0) ~ N(0, I)`, `y(0)` a fresh dequantized
/// code, integrated to `t = 1`; returns `x(1)`.
pub fn generate<S, F>(
    field: &F,
    codebook: &ClassCodebook<S>,
    class_idx: usize,
    n: usize,
    rng: &mut SeededRng,
    config: &SolverConfig,
) -> Result<Vec<Vec<S>>>
where
    S: Scalar,
    F: VelocityField<S> + ?Sized,
{
    check_codebook(field, codebook)?;
    codebook.center(class_idx)?;
    let mut config = *config;
    config.record_trajectory = false;
    (0..n)
        .map(|_| {
            let x = rng.normal_vec(field.dim_x());
            let y = codebook.dequantize(class_idx, rng)?;
            let (end, _) = integrate(field, &CoupledState { x, y, t: S::zero() }, S::zero(), S::one(), &config)?;
            Ok(end.x)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<S> {
    pub class_idx: usize,
    /// Mean over trajectories of the recovered code `y(0)`.
    pub mean_y0: Vec<S>,
}

/// Reverse-flow classification: `x(1) = x_obs`, `y(1) ~ N(0, I)`, integrate
/// to `t = 0`, average `y(0)` over `trajectories` runs and decode.
pub fn classify<S, F>(
    field: &F,
    codebook: &ClassCodebook<S>,
    x_obs: &[S],
    rng: &mut SeededRng,
    config: &SolverConfig,
    trajectories: usize,
) -> Result<Classification<S>>
where
    S: Scalar,
    F: VelocityField<S> + ?Sized,
{
    check_codebook(field, codebook)?;
    check_dim("x_obs", field.dim_x(), x_obs.len())?;
    if trajectories == 0 {
        return Err(invalid("trajectories", "must be at least 1"));
    }
    let mut config = *config;
    config.record_trajectory = false;
    let ends = (0..trajectories)
        .map(|_| {
            let start = CoupledState {
                x: x_obs.to_vec(),
                y: rng.normal_vec(field.dim_y()),
                t: S::one(),
            };
            integrate(field, &start, S::one(), S::zero(), &config).map(|(end, _)| end.y)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_y0 = mean_vector(&ends)?;
    Ok(Classification {
        class_idx: codebook.decode(&mean_y0),
        mean_y0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_field() -> FnField<impl Fn(&[f64], &[f64], f64) -> CoupledVelocity<f64>> {
        FnField {
            dim_x: 2,
            dim_y: 1,
            f: |x: &[f64], y: &[f64], _t: f64| CoupledVelocity {
                x: vec![0.0; x.len()],
                y: vec![0.0; y.len()],
            },
        }
    }

    fn state(x: &[f64], y: &[f64], t: f64) -> CoupledState<f64> {
        CoupledState {
            x: x.to_vec(),
            y: y.to_vec(),
            t,
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let s = state(&[0.3, -1.2], &[0.7], 0.0);
        for scheme in [Scheme::Euler, Scheme::Midpoint, Scheme::Rk4] {
            for steps in [1, 3, 20] {
                let (end, _) =
                    integrate(&zero_field(), &s, 0.0, 1.0, &SolverConfig::with_scheme(scheme, steps)).unwrap();
                assert_eq!(end.x, s.x);
                assert_eq!(end.y, s.y);
            }
        }
    }

    #[test]
    fn constant_field_single_reverse_step() {
        let field = FnField {
            dim_x: 1,
            dim_y: 1,
            f: |_: &[f64], _: &[f64], _: f64| CoupledVelocity {
                x: vec![0.25],
                y: vec![-0.75],
            },
        };
        let (end, _) =
            integrate(&field, &state(&[1.0], &[0.4], 1.0), 1.0, 0.0, &SolverConfig::euler(1)).unwrap();
        assert_eq!(end.y, vec![0.4 + 0.75]);
        assert_eq!(end.x, vec![1.0 - 0.25]);
        assert_eq!(end.t, 0.0);
    }

    #[test]
    fn trajectory_visits_exact_grid() {
        let cfg = SolverConfig {
            record_trajectory: true,
            ..SolverConfig::euler(7)
        };
        let s = state(&[0.0, 0.0], &[0.0], 1.0);
        let (_, traj) = integrate(&zero_field(), &s, 1.0, 0.0, &cfg).unwrap();
        let traj = traj.unwrap();
        assert_eq!(traj.states.len(), 8);
        for (k, st) in traj.states.iter().enumerate() {
            assert_eq!(st.t, 1.0 - k as f64 / 7.0);
        }
        assert_eq!(traj.states[7].t, 0.0);
        let csv = traj.to_csv();
        assert!(csv.starts_with("step,t,x0,x1,y0\n"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn rejects_bad_endpoints_and_steps() {
        let s = state(&[0.0, 0.0], &[0.0], 0.0);
        assert!(integrate(&zero_field(), &s, 0.0, 0.5, &SolverConfig::euler(2)).is_err());
        assert!(integrate(&zero_field(), &s, 0.0, 0.0, &SolverConfig::euler(2)).is_err());
        assert!(integrate(&zero_field(), &s, 0.0, 1.0, &SolverConfig::euler(0)).is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let field = FnField {
            dim_x: 1,
            dim_y: 1,
            f: |x: &[f64], _: &[f64], _: f64| CoupledVelocity {
                x: vec![x[0] * 1e300],
                y: vec![0.0],
            },
        };
        let err = integrate(&field, &state(&[1e10], &[0.0], 0.0), 0.0, 1.0, &SolverConfig::euler(4))
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { step: 1, .. }), "{err:?}");
    }

    #[test]
    fn hold_x_freezes_data_half() {
        let field = FnField {
            dim_x: 1,
            dim_y: 1,
            f: |_: &[f64], _: &[f64], _: f64| CoupledVelocity {
                x: vec![1.0],
                y: vec![1.0],
            },
        };
        let cfg = SolverConfig {
            hold_x: true,
            ..SolverConfig::euler(4)
        };
        let (end, _) = integrate(&field, &state(&[0.5], &[0.0], 1.0), 1.0, 0.0, &cfg).unwrap();
        assert_eq!(end.x, vec![0.5]);
        assert_eq!(end.y, vec![-1.0]);
    }

    fn exp_error(scheme: Scheme, steps: usize) -> f64 {
        let field = FnField {
            dim_x: 1,
            dim_y: 1,
            f: |x: &[f64], _: &[f64], _: f64| CoupledVelocity {
                x: vec![x[0]],
                y: vec![0.0],
            },
        };
        let (end, _) = integrate(
            &field,
            &state(&[1.0], &[0.0], 0.0),
            0.0,
            1.0,
            &SolverConfig::with_scheme(scheme, steps),
        )
        .unwrap();
        (end.x[0] - std::f64::consts::E).abs()
    }

    #[test]
    fn convergence_orders() {
        for (scheme, lo, hi) in [
            (Scheme::Euler, 1.6, 2.4),
            (Scheme::Midpoint, 3.2, 4.8),
            (Scheme::Rk4, 12.0, 20.0),
        ] {
            for steps in [8, 16, 32] {
                let ratio = exp_error(scheme, steps) / exp_error(scheme, 2 * steps);
                assert!((lo..=hi).contains(&ratio), "{scheme} {steps}: {ratio}");
            }
        }
    }

    #[test]
    fn one_step_classification_is_single_evaluation() {
        // v_y = y - 2x: one reverse Euler step gives y0 = y1 - (y1 - 2 x_obs) = 2 x_obs.
        let field = FnField {
            dim_x: 1,
            dim_y: 1,
            f: |x: &[f64], y: &[f64], _: f64| CoupledVelocity {
                x: vec![0.0],
                y: vec![y[0] - 2.0 * x[0]],
            },
        };
        let cb = ClassCodebook::<f64>::new(2, 1, 0.5).unwrap();
        let mut rng = SeededRng::new(3);
        let c = classify(&field, &cb, &[0.4], &mut rng, &SolverConfig::euler(1), 1).unwrap();
        assert!((c.mean_y0[0] - 0.8).abs() < 1e-15);
        assert_eq!(c.class_idx, 1);
        let c = classify(&field, &cb, &[-0.4], &mut rng, &SolverConfig::euler(1), 3).unwrap();
        assert_eq!(c.class_idx, 0);
        assert!(classify(&field, &cb, &[0.4], &mut rng, &SolverConfig::euler(1), 0).is_err());
    }

    #[test]
    fn generate_empty_and_deterministic() {
        let cb = ClassCodebook::<f64>::new(2, 1, 0.5).unwrap();
        let cfg = SolverConfig::default();
        let none = generate(&zero_field(), &cb, 0, 0, &mut SeededRng::new(0), &cfg).unwrap();
        assert!(none.is_empty());
        let a = generate(&zero_field(), &cb, 1, 5, &mut SeededRng::new(4), &cfg).unwrap();
        let b = generate(&zero_field(), &cb, 1, 5, &mut SeededRng::new(4), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(generate(&zero_field(), &cb, 2, 5, &mut SeededRng::new(4), &cfg).is_err());
    }
}
