//! Damped Newton-Raphson solver for flattened algebraic systems.
//!
//! The Jacobian is assembled once from symbolic derivatives of every residual
//! and evaluated densely; linear steps use LU with partial pivoting, with a
//! small diagonal regularization retried on singular factorizations.
//! A backtracking line search (step halving) guarantees the 2-norm of the
//! residual never increases between accepted iterates. [`sweep`] runs a
//! warm-started continuation over a ramp schedule.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::expr::{Binding, Expr, ExprError, Ident};
use crate::model::{structural_check, AliasTarget, Equation, FlatSystem, VarEntry};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Convergence test: `‖F‖∞ <= residual_tolerance` (absolute, SI units).
    pub residual_tolerance: f64,
    /// Stall test on the accepted step: `‖α·δ‖∞ <= step_tolerance * (1 + ‖x‖∞)`.
    pub step_tolerance: f64,
    /// Smallest damping factor the line search may reach.
    pub min_step_factor: f64,
    /// Added to the Jacobian diagonal when the factorization is singular.
    pub regularization: f64,
    /// Warm-start each sweep point from the previous solution.
    pub warm_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 50,
            residual_tolerance: 1e-9,
            step_tolerance: 1e-12,
            min_step_factor: (2.0f64).powi(-20),
            regularization: 1e-12,
            warm_start: true,
        }
    }
}

/// Residual norms observed at the start of one Newton iteration, plus the
/// damping factor and ∞-norm length of the step taken from that point
/// (both 0 when no step follows).
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_inf: f64,
    pub residual_two: f64,
    pub step_factor: f64,
    pub step_norm: f64,
}

/// Converged (or stalled) variable assignment with the iteration trace.
///
/// `assignment` covers every original variable: unknowns of the reduced
/// system, alias-eliminated variables re-expanded through their
/// representatives, and ramp states at the solve time.
#[derive(Debug, Clone)]
pub struct Solution {
    pub assignment: BTreeMap<String, f64>,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    /// Reduced-system iterate in variable-table order (used for warm starts).
    pub reduced: Vec<f64>,
    /// Time the ramp closures were instantiated at.
    pub time: f64,
}

impl Solution {
    pub fn value(&self, path: &str) -> Option<f64> {
        self.assignment.get(path).copied()
    }
}

/// Continuation grid for ramped boundary states. The ramp closures
/// themselves live in the [`FlatSystem`]; the schedule only carries the
/// strictly increasing time grid to instantiate them at.
#[derive(Debug, Clone)]
pub struct RampSchedule {
    times: Vec<f64>,
}

impl RampSchedule {
    pub fn new(times: Vec<f64>) -> Result<RampSchedule, SolveError> {
        if times.is_empty() {
            return Err(SolveError::EmptySchedule);
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SolveError::NonIncreasingSchedule);
        }
        Ok(RampSchedule { times })
    }

    /// Uniform grid `start, start+step, ...` up to and including `stop`
    /// when it lies on the grid.
    pub fn uniform(start: f64, stop: f64, step: f64) -> Result<RampSchedule, SolveError> {
        if step <= 0.0 || step.is_nan() || stop < start {
            return Err(SolveError::NonIncreasingSchedule);
        }
        // tolerate one part in 1e9 of rounding in (stop - start)/step
        let n = ((stop - start) / step * (1.0 + 1e-9)).floor() as usize;
        RampSchedule::new((0..=n).map(|i| start + step * i as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("system is not well-posed:\n{0}")]
    Structural(String),
    #[error("evaluation of `{equation}` failed: {source}")]
    Eval { equation: String, source: ExprError },
    #[error("jacobian is singular at variable `{variable}` (pivot {pivot:e}) and regularization did not recover it")]
    Singular { variable: String, pivot: f64 },
    #[error("sweep failed at t = {time}: {reason}")]
    SweepPoint { time: f64, reason: String },
    #[error("ramp schedule is empty")]
    EmptySchedule,
    #[error("ramp schedule times must be strictly increasing")]
    NonIncreasingSchedule,
}

/// Residual-and-Jacobian evaluator for a structurally sound system.
pub struct Evaluator {
    variables: Vec<VarEntry>,
    idents: Vec<Ident>,
    residuals: Vec<Equation>,
    /// Per equation: `(column, symbolic partial)` for each occurring unknown.
    gradients: Vec<Vec<(usize, Expr)>>,
}

impl Evaluator {
    pub fn dimension(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[VarEntry] {
        &self.variables
    }

    fn binding(&self, x: &DVector<f64>, params: &Binding) -> Binding {
        let mut b = params.clone();
        for (i, ident) in self.idents.iter().enumerate() {
            b.set_var(ident.clone(), x[i]);
        }
        b
    }

    /// `F(x)` with ramp parameters taken from `params`.
    pub fn residuals(
        &self,
        x: &DVector<f64>,
        params: &Binding,
    ) -> Result<DVector<f64>, SolveError> {
        let b = self.binding(x, params);
        let mut f = DVector::zeros(self.residuals.len());
        for (i, eq) in self.residuals.iter().enumerate() {
            f[i] = eq.expr.evaluate(&b).map_err(|source| SolveError::Eval {
                equation: eq.label.clone(),
                source,
            })?;
        }
        Ok(f)
    }

    /// `J(x)`, dense, from the symbolic partials.
    pub fn jacobian(&self, x: &DVector<f64>, params: &Binding) -> Result<DMatrix<f64>, SolveError> {
        let b = self.binding(x, params);
        let n = self.residuals.len();
        let mut j = DMatrix::zeros(n, self.variables.len());
        for (row, grads) in self.gradients.iter().enumerate() {
            for (col, partial) in grads {
                j[(row, *col)] = partial.evaluate(&b).map_err(|source| SolveError::Eval {
                    equation: self.residuals[row].label.clone(),
                    source,
                })?;
            }
        }
        Ok(j)
    }
}

/// Build the residual/Jacobian evaluator. Fails if the system does not pass
/// [`structural_check`].
pub fn assemble(fs: &FlatSystem) -> Result<Evaluator, SolveError> {
    let report = structural_check(fs);
    if !report.is_ok() {
        return Err(SolveError::Structural(report.to_string()));
    }
    let index: HashMap<&str, usize> = fs
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.path.as_str(), i))
        .collect();
    let mut gradients = Vec::with_capacity(fs.equations.len());
    for eq in &fs.equations {
        let mut row = Vec::new();
        for var in eq.expr.free_vars() {
            if let Some(&col) = index.get(&*var) {
                let partial = eq.expr.differentiate(&var).simplify();
                row.push((col, partial));
            }
        }
        gradients.push(row);
    }
    Ok(Evaluator {
        variables: fs.variables.clone(),
        idents: fs
            .variables
            .iter()
            .map(|v| Ident::from(v.path.as_str()))
            .collect(),
        residuals: fs.equations.clone(),
        gradients,
    })
}

/// Factor and solve `J δ = -F`, regularizing the diagonal once if the
/// factorization is singular. A pivot is bad when it is non-finite or
/// vanishes relative to the largest pivot.
fn newton_step(
    evaluator: &Evaluator,
    j: &DMatrix<f64>,
    f: &DVector<f64>,
    regularization: f64,
) -> Result<DVector<f64>, SolveError> {
    // A pivot is only treated as singular when it is exactly zero (or not
    // finite): partial pivoting plus the line search copes with legitimately
    // tiny pivots from badly scaled rows, and flagging those too eagerly
    // would reject solvable systems.
    fn worst_pivot(u: &DMatrix<f64>) -> (usize, f64) {
        let mut worst = (usize::MAX, f64::INFINITY);
        for i in 0..u.nrows() {
            let d = u[(i, i)];
            if (!d.is_finite() || d == 0.0) && (!d.is_finite() || d.abs() < worst.1) {
                worst = (i, d.abs());
            }
        }
        worst
    }

    let lu = j.clone().lu();
    let u = lu.u();
    let (bad_col, pivot) = worst_pivot(&u);
    if bad_col == usize::MAX {
        if let Some(delta) = lu.solve(&(-f)) {
            return Ok(delta);
        }
    }

    let mut jr = j.clone();
    for i in 0..jr.nrows().min(jr.ncols()) {
        jr[(i, i)] += regularization;
    }
    let lu = jr.lu();
    let u = lu.u();
    let (bad_col2, pivot2) = worst_pivot(&u);
    if bad_col2 == usize::MAX {
        if let Some(delta) = lu.solve(&(-f)) {
            return Ok(delta);
        }
    }

    let (col, pivot) = if bad_col2 != usize::MAX {
        (bad_col2, pivot2)
    } else {
        (bad_col, pivot)
    };
    Err(SolveError::Singular {
        variable: evaluator
            .variables
            .get(col.min(evaluator.variables.len().saturating_sub(1)))
            .map(|v| v.path.clone())
            .unwrap_or_else(|| "<none>".to_string()),
        pivot,
    })
}

/// Solve the reduced system with ramp closures instantiated at time `t`.
///
/// Initial values come from `guess` where bound, otherwise from the
/// domain-supplied per-variable defaults. Non-convergence is not an error:
/// the returned [`Solution`] carries the trace and `converged = false`.
pub fn newton_solve_at(
    fs: &FlatSystem,
    guess: &Binding,
    opts: &SolveOptions,
    t: f64,
) -> Result<Solution, SolveError> {
    let evaluator = assemble(fs)?;
    let params = fs.binding_at(t);

    let mut x = DVector::from_iterator(
        evaluator.variables.len(),
        evaluator
            .variables
            .iter()
            .map(|v| guess.var(&v.path).unwrap_or(v.guess)),
    );

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut f = evaluator.residuals(&x, &params)?;
    let mut rinf = f.amax();
    let mut rtwo = f.norm();

    let mut iterations = 0;
    for iteration in 0..opts.max_iterations {
        trace.push(IterationRecord {
            iteration,
            residual_inf: rinf,
            residual_two: rtwo,
            step_factor: 0.0,
            step_norm: 0.0,
        });
        if rinf <= opts.residual_tolerance {
            converged = true;
            break;
        }

        let j = evaluator.jacobian(&x, &params)?;
        let delta = newton_step(&evaluator, &j, &f, opts.regularization)?;

        // backtracking: accept only a strict decrease of ‖F‖₂
        let mut alpha = 1.0f64;
        let mut accepted = None;
        while alpha >= opts.min_step_factor {
            let x_trial = &x + &delta * alpha;
            // an out-of-domain trial point simply shortens the step
            if let Ok(f_trial) = evaluator.residuals(&x_trial, &params) {
                let r2 = f_trial.norm();
                if r2.is_finite() && r2 < rtwo {
                    accepted = Some((x_trial, f_trial, r2));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new, r2_new)) = accepted else {
            break; // line search stalled; report non-convergence with trace
        };
        let step_inf = (&x_new - &x).amax();
        {
            let record = trace.last_mut().unwrap();
            record.step_factor = alpha;
            record.step_norm = step_inf;
        }
        iterations = iteration + 1;

        let stalled = step_inf <= opts.step_tolerance * (1.0 + x.amax());
        x = x_new;
        f = f_new;
        rtwo = r2_new;
        rinf = f.amax();
        if stalled {
            converged = rinf <= opts.residual_tolerance;
            if converged {
                trace.push(IterationRecord {
                    iteration: iterations,
                    residual_inf: rinf,
                    residual_two: rtwo,
                    step_factor: 0.0,
                    step_norm: 0.0,
                });
            }
            break;
        }
    }
    if !converged && rinf <= opts.residual_tolerance {
        // ran out of iterations exactly at the tolerance
        converged = true;
    }

    let mut assignment = BTreeMap::new();
    for (i, v) in evaluator.variables.iter().enumerate() {
        assignment.insert(v.path.clone(), x[i]);
    }
    for (from, target) in &fs.aliases {
        let value = match target {
            AliasTarget::Constant(c) => *c,
            AliasTarget::Variable(rep) => assignment[rep],
        };
        assignment.insert(from.clone(), value);
    }
    for ramp in &fs.ramps {
        assignment.insert(ramp.path.clone(), ramp.value_at(t));
    }

    Ok(Solution {
        assignment,
        converged,
        residual_norm: rinf,
        iterations,
        trace,
        reduced: x.iter().copied().collect(),
        time: t,
    })
}

/// Solve at `t = 0` (systems without ramp states are time-independent).
pub fn newton_solve(
    fs: &FlatSystem,
    guess: &Binding,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    newton_solve_at(fs, guess, opts, 0.0)
}

/// Continuation sweep over the ramp schedule: one steady solve per grid
/// point, each warm-started from the previous solution (when enabled).
/// A point that fails to converge aborts the sweep with its time value.
pub fn sweep(
    fs: &FlatSystem,
    schedule: &RampSchedule,
    opts: &SolveOptions,
) -> Result<Vec<Solution>, SolveError> {
    let mut out: Vec<Solution> = Vec::with_capacity(schedule.times.len());
    for &t in &schedule.times {
        let guess = match out.last() {
            Some(prev) if opts.warm_start => {
                let mut b = Binding::new();
                for (path, value) in &prev.assignment {
                    b.set_var(path.clone(), *value);
                }
                b
            }
            _ => Binding::new(),
        };
        let solution = match newton_solve_at(fs, &guess, opts, t) {
            Ok(s) => s,
            Err(e) => {
                return Err(SolveError::SweepPoint {
                    time: t,
                    reason: e.to_string(),
                })
            }
        };
        if !solution.converged {
            return Err(SolveError::SweepPoint {
                time: t,
                reason: format!(
                    "not converged after {} iterations (residual {:e})",
                    solution.iterations, solution.residual_norm
                ),
            });
        }
        out.push(solution);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::VariableRole;
    use approx::assert_relative_eq;

    fn scalar_system(expr: Expr, guess: f64) -> FlatSystem {
        FlatSystem {
            variables: vec![VarEntry {
                path: "x".to_string(),
                role: VariableRole::Internal,
                unit: "-".to_string(),
                guess,
            }],
            equations: vec![Equation::new("f", expr)],
            ..Default::default()
        }
    }

    #[test]
    fn assemble_evaluates_residual_and_jacobian() {
        let fs = scalar_system(Expr::var("x").sq() - Expr::constant(4.0), 3.0);
        let ev = assemble(&fs).unwrap();
        let x = DVector::from_vec(vec![3.0]);
        let params = Binding::new();
        assert_eq!(ev.residuals(&x, &params).unwrap()[0], 5.0);
        assert_eq!(ev.jacobian(&x, &params).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn assemble_rejects_non_square_systems() {
        let mut fs = scalar_system(Expr::var("x").sq() - Expr::constant(4.0), 3.0);
        fs.equations
            .push(Equation::new("extra", Expr::var("x") + 1.0));
        assert!(matches!(assemble(&fs), Err(SolveError::Structural(_))));
    }

    #[test]
    fn connection_pair_jacobian_is_constant_unit_entries() {
        let fs = FlatSystem {
            variables: vec![
                VarEntry {
                    path: "a".into(),
                    role: VariableRole::Across,
                    unit: "Pa".into(),
                    guess: 0.0,
                },
                VarEntry {
                    path: "b".into(),
                    role: VariableRole::Through,
                    unit: "m3/s".into(),
                    guess: 0.0,
                },
            ],
            equations: vec![
                Equation::new("eq0", Expr::var("a") - Expr::var("b")),
                Equation::new("eq1", Expr::var("a") + Expr::var("b")),
            ],
            ..Default::default()
        };
        let ev = assemble(&fs).unwrap();
        let j = ev
            .jacobian(&DVector::from_vec(vec![7.0, -3.0]), &Binding::new())
            .unwrap();
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(0, 1)], -1.0);
        assert_eq!(j[(1, 0)], 1.0);
        assert_eq!(j[(1, 1)], 1.0);
    }

    #[test]
    fn newton_finds_quadratic_root_with_quadratic_tail() {
        let fs = scalar_system(Expr::var("x").sq() - Expr::constant(4.0), 3.0);
        let sol = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 6, "took {} iterations", sol.iterations);
        assert_relative_eq!(sol.value("x").unwrap(), 2.0, max_relative = 1e-10);

        // residuals are an error measure up to the factor f'(2); the tail
        // ratios r_{k+1}/r_k^2 must stay bounded
        let rs: Vec<f64> = sol.trace.iter().map(|r| r.residual_inf).collect();
        assert!(rs.len() >= 4);
        let mut ratios = Vec::new();
        for w in rs.windows(2) {
            if w[0] < 1.0 && w[0] > 0.0 {
                ratios.push(w[1] / (w[0] * w[0]));
            }
        }
        assert!(ratios.len() >= 3, "ratios: {ratios:?}");
        for r in &ratios {
            assert!(*r <= 0.25, "quadratic-tail ratio too large: {ratios:?}");
        }
    }

    #[test]
    fn line_search_never_increases_residual_two_norm() {
        // a stiff scalar with an awkward start forces damping
        let fs = scalar_system(
            Expr::var("x").ln() + Expr::var("x").sq() - Expr::constant(2.0),
            6.0,
        );
        let sol = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        let rs: Vec<f64> = sol.trace.iter().map(|r| r.residual_two).collect();
        for w in rs.windows(2) {
            assert!(w[1] < w[0] + 1e-15, "residual increased: {rs:?}");
        }
    }

    #[test]
    fn guess_binding_overrides_default() {
        // x^2 = 4 has two roots; a negative start must find -2
        let fs = scalar_system(Expr::var("x").sq() - Expr::constant(4.0), 3.0);
        let guess = Binding::new().with_var("x", -3.0);
        let sol = newton_solve(&fs, &guess, &SolveOptions::default()).unwrap();
        assert_relative_eq!(sol.value("x").unwrap(), -2.0, max_relative = 1e-10);
    }

    #[test]
    fn unrecoverable_flat_direction_reports_non_convergence() {
        // |x| - 1 = 0 started at 0: sign(0) = 0 makes the Jacobian zero;
        // regularization produces a huge step the line search cannot use
        let fs = scalar_system(Expr::var("x").abs() - Expr::constant(1.0), 0.0);
        let sol = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap();
        assert!(!sol.converged);
        assert!(!sol.trace.is_empty());
    }

    #[test]
    fn nan_jacobian_is_singular_and_names_the_variable() {
        // powf with a negative base and fractional exponent yields NaN, which
        // regularization cannot repair
        let fs = scalar_system(Expr::var("x").powf(0.5) - Expr::constant(2.0), -1.0);
        let err = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap_err();
        match err {
            SolveError::Singular { variable, .. } => assert_eq!(variable, "x"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn singular_jacobian_is_named() {
        // d(sqrt(x))/dx at 0 is 1/(2*sqrt(0)): the Jacobian evaluation
        // divides by zero, which must surface as an equation-named error
        let fs = scalar_system(Expr::var("x").sqrt() - Expr::constant(2.0), 0.0);
        let err = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap_err();
        match err {
            SolveError::Eval { equation, .. } => assert_eq!(equation, "f"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn zero_rate_sweep_repeats_the_same_solution() {
        let mut fs = scalar_system(Expr::var("x") - Expr::param("r"), 0.0);
        fs.ramps.push(crate::model::RampClosure {
            path: "r".to_string(),
            initial: 5.0,
            rate: 0.0,
            unit: "-".to_string(),
        });
        let schedule = RampSchedule::new(vec![0.0, 1.0, 2.0]).unwrap();
        let sols = sweep(&fs, &schedule, &SolveOptions::default()).unwrap();
        assert_eq!(sols.len(), 3);
        for s in &sols {
            assert_eq!(s.value("x").unwrap(), sols[0].value("x").unwrap());
        }
    }

    #[test]
    fn single_point_sweep_equals_newton_solve() {
        let mut fs = scalar_system(Expr::var("x") - Expr::param("r"), 0.0);
        fs.ramps.push(crate::model::RampClosure {
            path: "r".to_string(),
            initial: 2.0,
            rate: 1.0,
            unit: "-".to_string(),
        });
        let schedule = RampSchedule::new(vec![0.0]).unwrap();
        let swept = sweep(&fs, &schedule, &SolveOptions::default()).unwrap();
        let single = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap();
        assert_eq!(swept[0].value("x"), single.value("x"));
    }

    #[test]
    fn ramp_values_track_the_grid() {
        let mut fs = scalar_system(Expr::var("x") - Expr::param("r"), 0.0);
        fs.ramps.push(crate::model::RampClosure {
            path: "r".to_string(),
            initial: 10.0,
            rate: -1.0,
            unit: "-".to_string(),
        });
        let schedule = RampSchedule::uniform(0.0, 4.0, 2.0).unwrap();
        let sols = sweep(&fs, &schedule, &SolveOptions::default()).unwrap();
        let xs: Vec<f64> = sols.iter().map(|s| s.value("x").unwrap()).collect();
        assert_eq!(xs, vec![10.0, 8.0, 6.0]);
        // ramp state itself is reported in the assignment
        assert_eq!(sols[2].value("r"), Some(6.0));
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(
            RampSchedule::new(vec![]),
            Err(SolveError::EmptySchedule)
        ));
        assert!(matches!(
            RampSchedule::new(vec![0.0, 0.0]),
            Err(SolveError::NonIncreasingSchedule)
        ));
        assert_eq!(
            RampSchedule::uniform(0.0, 100.0, 10.0)
                .unwrap()
                .times()
                .len(),
            11
        );
        // a stop off the grid is not overshot
        let clipped = RampSchedule::uniform(0.0, 95.0, 10.0).unwrap();
        assert_eq!(clipped.times().len(), 10);
        assert_eq!(*clipped.times().last().unwrap(), 90.0);
    }

    #[test]
    fn determinism_bit_identical_reruns() {
        let fs = scalar_system(
            Expr::var("x").sq() * Expr::var("x") - Expr::var("x") - Expr::constant(17.3),
            1.4,
        );
        let a = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap();
        let b = newton_solve(&fs, &Binding::new(), &SolveOptions::default()).unwrap();
        assert_eq!(
            a.value("x").unwrap().to_bits(),
            b.value("x").unwrap().to_bits()
        );
        assert_eq!(a.iterations, b.iterations);
    }
}
