use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{EnergyTerms, RunTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::scalar::Scalar;

/// Time-step selection for the explicit update `φ ← φ - ξ ∇E`.
///
/// Steps are expressed for peak-normalized window weights. When the window
/// is scaled by a centre weight `c` (see
/// [`NlWindow::peak`](crate::similarity::NlWindow::peak)) the applied step
/// is `ξ / c`, so the data-driven motion per iteration does not depend on the
/// kernel normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiPolicy<T> {
    Fixed(T),
    /// Start at `initial` and halve until the first `probe_steps` energies
    /// are non-increasing (at most `max_halvings` times).
    Auto {
        initial: T,
        probe_steps: usize,
        max_halvings: usize,
    },
}

impl<T: Scalar> Default for XiPolicy<T> {
    fn default() -> Self {
        XiPolicy::Auto {
            initial: T::lit(0.1),
            probe_steps: 3,
            max_halvings: 40,
        }
    }
}

impl<T: Scalar> XiPolicy<T> {
    /// Nominal step (the fixed value or the first probe).
    pub fn nominal(&self) -> T {
        match *self {
            XiPolicy::Fixed(xi) => xi,
            XiPolicy::Auto { initial, .. } => initial,
        }
    }

    pub(crate) fn scaled(self, k: T) -> Self {
        match self {
            XiPolicy::Fixed(xi) => XiPolicy::Fixed(xi * k),
            XiPolicy::Auto {
                initial,
                probe_steps,
                max_halvings,
            } => XiPolicy::Auto {
                initial: initial * k,
                probe_steps,
                max_halvings,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let xi = self.nominal();
        if !(xi > T::zero()) || !xi.is_finite() {
            return Err(Error::param("xi", "time step must be positive"));
        }
        Ok(())
    }
}

/// What an objective evaluation produced.
pub(crate) enum Eval<T> {
    Ok(EnergyTerms<T>, Field<T>),
    /// The objective cannot continue (e.g. a region vanished).
    Stop,
}

pub(crate) struct DescentSettings<T> {
    pub xi: XiPolicy<T>,
    pub omega: T,
    pub max_iters: usize,
    pub clamp: T,
}

pub(crate) struct DescentOutcome<T> {
    pub phi: Field<T>,
    pub trace: RunTrace,
    pub xi: T,
    pub converged: bool,
    pub stopped: bool,
}

struct Run<T> {
    phi: Field<T>,
    grad: Option<Field<T>>,
    trace: RunTrace,
    last_energy: Option<T>,
    converged: bool,
    stopped: bool,
    start: Instant,
}

impl<T: Scalar> Run<T> {
    fn new(phi: Field<T>) -> Self {
        Self {
            phi,
            grad: None,
            trace: RunTrace::default(),
            last_energy: None,
            converged: false,
            stopped: false,
            start: Instant::now(),
        }
    }

    fn done(&self, max_iters: usize) -> bool {
        self.converged || self.stopped || self.trace.len() > max_iters
    }

    /// Evaluates at the current iterate, records it and applies the stop rule.
    fn observe(
        &mut self,
        omega: T,
        eval: &mut impl FnMut(&Field<T>) -> Result<Eval<T>>,
        monitor: &mut impl FnMut(usize, &Field<T>) -> Option<f64>,
    ) -> Result<()> {
        let iter = self.trace.len();
        match eval(&self.phi)? {
            Eval::Stop => {
                self.stopped = true;
                self.grad = None;
            }
            Eval::Ok(terms, grad) => {
                if !terms.total.is_finite() {
                    return Err(Error::NonFiniteEnergy { iteration: iter });
                }
                self.trace.records.push(TraceRecord {
                    iter,
                    energy: terms.total.as_f64(),
                    data: terms.data.as_f64(),
                    reg: terms.reg.as_f64(),
                    rfe: monitor(iter, &self.phi),
                    ms: self.start.elapsed().as_secs_f64() * 1e3,
                });
                if let Some(prev) = self.last_energy {
                    if (prev - terms.total).abs() < omega {
                        self.converged = true;
                    }
                }
                self.last_energy = Some(terms.total);
                self.grad = Some(grad);
            }
        }
        Ok(())
    }

    fn update(&mut self, xi: T, clamp: T) {
        let grad = self.grad.take().expect("gradient available before update");
        for (p, g) in self.phi.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *p = (*p - xi * *g).max(-clamp).min(clamp);
        }
    }

    fn step(
        &mut self,
        xi: T,
        s: &DescentSettings<T>,
        eval: &mut impl FnMut(&Field<T>) -> Result<Eval<T>>,
        monitor: &mut impl FnMut(usize, &Field<T>) -> Option<f64>,
    ) -> Result<()> {
        self.update(xi, s.clamp);
        self.observe(s.omega, eval, monitor)
    }
}

/// Explicit gradient descent from `phi0`. `monitor(iter, φ)` sees every
/// recorded iterate and supplies the RFE column of the trace.
pub(crate) fn descend<T: Scalar>(
    phi0: &Field<T>,
    s: &DescentSettings<T>,
    mut eval: impl FnMut(&Field<T>) -> Result<Eval<T>>,
    mut monitor: impl FnMut(usize, &Field<T>) -> Option<f64>,
) -> Result<DescentOutcome<T>> {
    let (mut run, xi) = match s.xi {
        XiPolicy::Fixed(xi) => {
            let mut run = Run::new(phi0.clone());
            run.observe(s.omega, &mut eval, &mut monitor)?;
            (run, xi)
        }
        XiPolicy::Auto {
            initial,
            probe_steps,
            max_halvings,
        } => {
            let mut xi = initial;
            let mut halvings = 0;
            loop {
                let mut run = Run::new(phi0.clone());
                run.observe(s.omega, &mut eval, &mut monitor)?;
                let mut monotone = true;
                for _ in 0..probe_steps {
                    if run.done(s.max_iters) {
                        break;
                    }
                    let before = run.last_energy;
                    run.step(xi, s, &mut eval, &mut monitor)?;
                    if let (Some(b), Some(a)) = (before, run.last_energy) {
                        if a > b {
                            monotone = false;
                            break;
                        }
                    }
                }
                if monotone || halvings >= max_halvings {
                    break (run, xi);
                }
                xi = xi * T::lit(0.5);
                halvings += 1;
            }
        }
    };
    while !run.done(s.max_iters) {
        run.step(xi, s, &mut eval, &mut monitor)?;
    }
    Ok(DescentOutcome {
        phi: run.phi,
        trace: run.trace,
        xi,
        converged: run.converged,
        stopped: run.stopped,
    })
}
