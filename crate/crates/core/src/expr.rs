//! Symbolic scalar expression trees.
//!
//! Every component equation in the kernel is an [`Expr`] asserted equal to
//! zero. Expressions support evaluation against a [`Binding`], symbolic
//! differentiation (for Jacobian assembly), simultaneous substitution (the
//! substrate of alias elimination), and local simplification.
//!
//! Trees are immutable after construction; children are shared through `Arc`,
//! so cloning and concurrent evaluation are cheap and safe. There is no
//! canonical form: simplification is local rewriting only, which is all a
//! numeric solver needs.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// Interned identifier for variables and parameters.
pub type Ident = Arc<str>;

/// Relative step for central-difference partials of external function nodes.
pub const EXTERNAL_FD_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    /// `sq(x) = x * x`, kept primitive so Jacobians of quadratic laws stay flat.
    Sq,
    Sqrt,
    Ln,
    /// Sign of the argument with `sign(0) = 0`; arises as the derivative of `abs`.
    Signum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Opaque scalar function callable from an expression tree.
///
/// Property backends enter equation systems through this trait: the solver
/// sees a differentiable black box whose partials are taken by central
/// differences with relative step [`EXTERNAL_FD_STEP`].
pub trait ExternalFn: Send + Sync {
    fn call(&self, args: &[f64]) -> Result<f64, String>;
}

impl<F> ExternalFn for F
where
    F: Fn(&[f64]) -> Result<f64, String> + Send + Sync,
{
    fn call(&self, args: &[f64]) -> Result<f64, String> {
        self(args)
    }
}

/// A call to an opaque external function, with an optional differentiation
/// multi-index: each entry in `partials` takes one more numeric partial with
/// respect to the argument at that position.
#[derive(Clone)]
pub struct ExternalCall {
    pub name: String,
    pub func: Arc<dyn ExternalFn>,
    pub args: Vec<Expr>,
    pub partials: Vec<usize>,
}

impl fmt::Debug for ExternalCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalCall")
            .field("name", &self.name)
            .field("args", &self.args)
            .field("partials", &self.partials)
            .finish()
    }
}

impl PartialEq for ExternalCall {
    fn eq(&self, other: &Self) -> bool {
        // Function pointers are not comparable; the name is the identity.
        self.name == other.name && self.args == other.args && self.partials == other.partials
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Ident),
    Param(Ident),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    External(ExternalCall),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("{op} of negative argument {arg} in `{context}`{assignment}")]
    NegativeArgument {
        op: &'static str,
        arg: f64,
        context: String,
        assignment: String,
    },
    #[error("division by zero in `{context}`{assignment}")]
    DivisionByZero { context: String, assignment: String },
    #[error("literal zero {0}")]
    LiteralZero(&'static str),
    #[error("duplicate identifier `{0}` in binding")]
    DuplicateIdentifier(String),
    #[error("cyclic substitution map involving `{0}`")]
    CyclicSubstitution(String),
    #[error("external function `{name}` failed: {message}")]
    External { name: String, message: String },
}

/// Bound values for the variables and parameters of an expression.
///
/// Variable and parameter namespaces are separate maps, but an identifier may
/// appear in only one of them.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    vars: HashMap<Ident, f64>,
    params: HashMap<Ident, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind_var(&mut self, name: impl Into<Ident>, value: f64) -> Result<(), ExprError> {
        let name = name.into();
        if self.vars.contains_key(&name) || self.params.contains_key(&name) {
            return Err(ExprError::DuplicateIdentifier(name.to_string()));
        }
        self.vars.insert(name, value);
        Ok(())
    }

    pub fn bind_param(&mut self, name: impl Into<Ident>, value: f64) -> Result<(), ExprError> {
        let name = name.into();
        if self.vars.contains_key(&name) || self.params.contains_key(&name) {
            return Err(ExprError::DuplicateIdentifier(name.to_string()));
        }
        self.params.insert(name, value);
        Ok(())
    }

    /// Chainable variant of [`bind_var`](Self::bind_var); panics on duplicates.
    pub fn with_var(mut self, name: impl Into<Ident>, value: f64) -> Self {
        self.bind_var(name, value).expect("duplicate identifier");
        self
    }

    /// Chainable variant of [`bind_param`](Self::bind_param); panics on duplicates.
    pub fn with_param(mut self, name: impl Into<Ident>, value: f64) -> Self {
        self.bind_param(name, value).expect("duplicate identifier");
        self
    }

    /// Insert-or-overwrite a variable value. Used by the solver to reuse one
    /// binding across iterations.
    pub fn set_var(&mut self, name: impl Into<Ident>, value: f64) {
        self.vars.insert(name.into(), value);
    }

    /// Insert-or-overwrite a parameter value.
    pub fn set_param(&mut self, name: impl Into<Ident>, value: f64) {
        self.params.insert(name.into(), value);
    }

    pub fn var(&self, name: &str) -> Option<f64> {
        self.vars.get(name).copied()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: impl Into<Ident>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn param(name: impl Into<Ident>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn abs(self) -> Expr {
        Expr::Unary(UnaryOp::Abs, Arc::new(self))
    }

    pub fn sq(self) -> Expr {
        Expr::Unary(UnaryOp::Sq, Arc::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Unary(UnaryOp::Sqrt, Arc::new(self))
    }

    pub fn signum(self) -> Expr {
        Expr::Unary(UnaryOp::Signum, Arc::new(self))
    }

    /// Natural logarithm. Panics if the argument folds to the literal
    /// constant zero; use [`try_ln`](Self::try_ln) for a fallible variant.
    pub fn ln(self) -> Expr {
        self.try_ln().expect("ln of literal zero")
    }

    pub fn try_ln(self) -> Result<Expr, ExprError> {
        if self.folded_const() == Some(0.0) {
            return Err(ExprError::LiteralZero("argument of ln"));
        }
        Ok(Expr::Unary(UnaryOp::Ln, Arc::new(self)))
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::Binary(BinaryOp::Pow, Arc::new(self), Arc::new(exponent))
    }

    pub fn powf(self, exponent: f64) -> Expr {
        self.pow(Expr::Const(exponent))
    }

    pub fn try_div(self, denominator: Expr) -> Result<Expr, ExprError> {
        if denominator.folded_const() == Some(0.0) {
            return Err(ExprError::LiteralZero("denominator"));
        }
        Ok(Expr::Binary(
            BinaryOp::Div,
            Arc::new(self),
            Arc::new(denominator),
        ))
    }

    /// Value of the subtree if it contains only constants.
    fn folded_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Var(_) | Expr::Param(_) | Expr::External(_) => None,
            Expr::Unary(op, x) => x.folded_const().map(|v| eval_unary_raw(*op, v)),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.folded_const()?, b.folded_const()?);
                Some(eval_binary_raw(*op, a, b))
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    /// Free variables of the tree (parameters excluded), in sorted order.
    pub fn free_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Expr::Const(_) | Expr::Param(_) => {}
            Expr::Var(id) => {
                out.insert(id.clone());
            }
            Expr::Unary(_, x) => x.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::External(c) => {
                for a in &c.args {
                    a.collect_vars(out);
                }
            }
        }
    }

    /// Free parameters of the tree, in sorted order.
    pub fn free_params(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Param(id) => {
                out.insert(id.clone());
            }
            Expr::Unary(_, x) => x.collect_params(out),
            Expr::Binary(_, a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
            Expr::External(c) => {
                for a in &c.args {
                    a.collect_params(out);
                }
            }
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) | Expr::Param(_) => false,
            Expr::Var(id) => &**id == name,
            Expr::Unary(_, x) => x.contains_var(name),
            Expr::Binary(_, a, b) => a.contains_var(name) || b.contains_var(name),
            Expr::External(c) => c.args.iter().any(|a| a.contains_var(name)),
        }
    }

    /// Arithmetic value of the tree under `binding`.
    ///
    /// `sqrt`/`ln` of a negative argument and division by zero are domain
    /// errors that name the offending subexpression and the variable
    /// assignment that produced it.
    pub fn evaluate(&self, binding: &Binding) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(id) => binding
                .var(id)
                .ok_or_else(|| ExprError::UnboundVariable(id.to_string())),
            Expr::Param(id) => binding
                .param(id)
                .ok_or_else(|| ExprError::UnboundParameter(id.to_string())),
            Expr::Unary(op, x) => {
                let v = x.evaluate(binding)?;
                match op {
                    UnaryOp::Sqrt if v < 0.0 => Err(ExprError::NegativeArgument {
                        op: "sqrt",
                        arg: v,
                        context: self.to_string(),
                        assignment: render_assignment(x, binding),
                    }),
                    UnaryOp::Ln if v < 0.0 => Err(ExprError::NegativeArgument {
                        op: "ln",
                        arg: v,
                        context: self.to_string(),
                        assignment: render_assignment(x, binding),
                    }),
                    _ => Ok(eval_unary_raw(*op, v)),
                }
            }
            Expr::Binary(op, a, b) => {
                let av = a.evaluate(binding)?;
                let bv = b.evaluate(binding)?;
                if *op == BinaryOp::Div && bv == 0.0 {
                    return Err(ExprError::DivisionByZero {
                        context: self.to_string(),
                        assignment: render_assignment(b, binding),
                    });
                }
                Ok(eval_binary_raw(*op, av, bv))
            }
            Expr::External(call) => {
                let mut argv = Vec::with_capacity(call.args.len());
                for a in &call.args {
                    argv.push(a.evaluate(binding)?);
                }
                external_value(call, &call.partials, &mut argv)
            }
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    ///
    /// `d(abs(x))/dx` is `sign(x)` with `sign(0) = 0`; the derivative of
    /// `sign` itself is taken as zero everywhere. Partials of external
    /// function nodes become numerically-differentiated nodes.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => Expr::Const(0.0),
            Expr::Var(id) => {
                if &**id == var {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Unary(op, x) => {
                let dx = x.differentiate(var);
                if dx.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                let x = Expr::clone(x);
                match op {
                    UnaryOp::Neg => neg(dx),
                    UnaryOp::Abs => mul(x.signum(), dx),
                    UnaryOp::Sq => mul(mul(Expr::Const(2.0), x), dx),
                    UnaryOp::Sqrt => div(dx, mul(Expr::Const(2.0), x.sqrt())),
                    UnaryOp::Ln => div(dx, x),
                    UnaryOp::Signum => Expr::Const(0.0),
                }
            }
            Expr::Binary(op, a, b) => {
                let (da, db) = (a.differentiate(var), b.differentiate(var));
                let (a, b) = (Expr::clone(a), Expr::clone(b));
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                    BinaryOp::Div => {
                        let num = sub(mul(da, b.clone()), mul(a, db));
                        div(num, b.sq())
                    }
                    BinaryOp::Pow => {
                        if let Some(c) = b.as_const() {
                            // power rule for constant exponents
                            mul(mul(Expr::Const(c), a.clone().powf(c - 1.0)), da)
                        } else {
                            // a^b * (db*ln(a) + b*da/a)
                            let t1 = mul(db, Expr::Unary(UnaryOp::Ln, Arc::new(a.clone())));
                            let t2 = mul(b.clone(), div(da, a.clone()));
                            mul(a.pow(b), add(t1, t2))
                        }
                    }
                }
            }
            Expr::External(call) => {
                let mut total = Expr::Const(0.0);
                for (i, arg) in call.args.iter().enumerate() {
                    let darg = arg.differentiate(var);
                    if darg.is_const(0.0) {
                        continue;
                    }
                    let mut partials = call.partials.clone();
                    partials.push(i);
                    let partial = Expr::External(ExternalCall {
                        name: call.name.clone(),
                        func: call.func.clone(),
                        args: call.args.clone(),
                        partials,
                    });
                    total = add(total, mul(partial, darg));
                }
                total
            }
        }
    }

    /// Simultaneous substitution of variables by expressions.
    ///
    /// The map is resolved to closed form first (entries may reference each
    /// other as long as the dependency graph is acyclic), so the result does
    /// not depend on any replacement order. Exact identity entries `x -> x`
    /// are no-ops; any other cycle is an error.
    pub fn substitute(&self, map: &HashMap<Ident, Expr>) -> Result<Expr, ExprError> {
        let resolved = resolve_substitution(map)?;
        Ok(self.apply_substitution(&resolved))
    }

    fn apply_substitution(&self, map: &HashMap<Ident, Expr>) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => self.clone(),
            Expr::Var(id) => map.get(id).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(op, x) => Expr::Unary(*op, Arc::new(x.apply_substitution(map))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Arc::new(a.apply_substitution(map)),
                Arc::new(b.apply_substitution(map)),
            ),
            Expr::External(call) => Expr::External(ExternalCall {
                name: call.name.clone(),
                func: call.func.clone(),
                args: call
                    .args
                    .iter()
                    .map(|a| a.apply_substitution(map))
                    .collect(),
                partials: call.partials.clone(),
            }),
        }
    }

    /// Local rewriting: constant folding plus the identities
    /// `x+0`, `x-0`, `0-x`, `x+x`, `x-x`, `x*0`, `x*1`, `x/1`, `x^0`, `x^1`.
    ///
    /// The result is evaluation-equivalent to the input at every binding;
    /// folds that could raise a domain error (`ln` or `sqrt` of a negative
    /// constant, division by a zero constant) are left in place.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => self.clone(),
            Expr::Unary(op, x) => simplify_unary(*op, x.simplify()),
            Expr::Binary(op, a, b) => simplify_binary(*op, a.simplify(), b.simplify()),
            Expr::External(call) => Expr::External(ExternalCall {
                name: call.name.clone(),
                func: call.func.clone(),
                args: call.args.iter().map(|a| a.simplify()).collect(),
                partials: call.partials.clone(),
            }),
        }
    }

    /// Construct an opaque external function node.
    pub fn external(name: impl Into<String>, func: Arc<dyn ExternalFn>, args: Vec<Expr>) -> Expr {
        Expr::External(ExternalCall {
            name: name.into(),
            func,
            args,
            partials: Vec::new(),
        })
    }
}

fn eval_unary_raw(op: UnaryOp, v: f64) -> f64 {
    match op {
        UnaryOp::Neg => -v,
        UnaryOp::Abs => v.abs(),
        UnaryOp::Sq => v * v,
        UnaryOp::Sqrt => v.sqrt(),
        UnaryOp::Ln => v.ln(),
        UnaryOp::Signum => {
            if v == 0.0 {
                0.0
            } else {
                v.signum()
            }
        }
    }
}

fn eval_binary_raw(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
        BinaryOp::Pow => a.powf(b),
    }
}

/// Evaluate an external call at fixed argument values, applying the
/// differentiation multi-index by nested central differences.
///
/// If a shifted point leaves the function's domain (common next to region
/// boundaries of property backends), falls back to a one-sided difference.
fn external_value(
    call: &ExternalCall,
    partials: &[usize],
    argv: &mut Vec<f64>,
) -> Result<f64, ExprError> {
    match partials.split_last() {
        None => call.func.call(argv).map_err(|message| ExprError::External {
            name: call.name.clone(),
            message,
        }),
        Some((&i, rest)) => {
            let x = argv[i];
            let h = EXTERNAL_FD_STEP * x.abs().max(1.0);
            argv[i] = x + h;
            let fwd = external_value(call, rest, argv);
            argv[i] = x - h;
            let bwd = external_value(call, rest, argv);
            argv[i] = x;
            match (fwd, bwd) {
                (Ok(f), Ok(b)) => Ok((f - b) / (2.0 * h)),
                (Ok(f), Err(_)) => {
                    let f0 = external_value(call, rest, argv)?;
                    Ok((f - f0) / h)
                }
                (Err(_), Ok(b)) => {
                    let f0 = external_value(call, rest, argv)?;
                    Ok((f0 - b) / h)
                }
                (Err(e), Err(_)) => Err(e),
            }
        }
    }
}

fn render_assignment(e: &Expr, binding: &Binding) -> String {
    let vars = e.free_vars();
    if vars.is_empty() {
        return String::new();
    }
    let parts: Vec<String> = vars
        .iter()
        .map(|v| match binding.var(v) {
            Some(val) => format!("{v} = {val}"),
            None => format!("{v} = <unbound>"),
        })
        .collect();
    format!(" ({})", parts.join(", "))
}

/// Resolve a substitution map so no replacement mentions a mapped variable.
fn resolve_substitution(map: &HashMap<Ident, Expr>) -> Result<HashMap<Ident, Expr>, ExprError> {
    // Identity entries are no-ops, not cycles.
    let active: HashMap<&Ident, &Expr> = map
        .iter()
        .filter(|(k, v)| !matches!(v, Expr::Var(id) if id == *k))
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Visiting,
        Done,
    }

    fn resolve(
        key: &Ident,
        active: &HashMap<&Ident, &Expr>,
        marks: &mut HashMap<Ident, Mark>,
        out: &mut HashMap<Ident, Expr>,
    ) -> Result<(), ExprError> {
        match marks.get(key) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Visiting) => return Err(ExprError::CyclicSubstitution(key.to_string())),
            None => {}
        }
        marks.insert(key.clone(), Mark::Visiting);
        let expr = active[key];
        for dep in expr.free_vars() {
            if active.contains_key(&dep) {
                resolve(&dep, active, marks, out)?;
            }
        }
        let resolved = expr.apply_substitution(out);
        out.insert(key.clone(), resolved);
        marks.insert(key.clone(), Mark::Done);
        Ok(())
    }

    let mut marks = HashMap::new();
    let mut out = HashMap::new();
    let mut keys: Vec<&Ident> = active.keys().copied().collect();
    keys.sort();
    for key in keys {
        resolve(key, &active, &mut marks, &mut out)?;
    }
    Ok(out)
}

fn simplify_unary(op: UnaryOp, x: Expr) -> Expr {
    if let Some(v) = x.as_const() {
        let safe = match op {
            UnaryOp::Sqrt | UnaryOp::Ln => v > 0.0,
            _ => true,
        };
        if safe {
            return Expr::Const(eval_unary_raw(op, v));
        }
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = &x {
            return Expr::clone(inner);
        }
    }
    Expr::Unary(op, Arc::new(x))
}

fn simplify_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Some(av), Some(bv)) = (a.as_const(), b.as_const()) {
        let safe = op != BinaryOp::Div || bv != 0.0;
        if safe {
            return Expr::Const(eval_binary_raw(op, av, bv));
        }
    }
    match op {
        BinaryOp::Add => {
            if a.is_const(0.0) {
                return b;
            }
            if b.is_const(0.0) {
                return a;
            }
            if a == b {
                return simplify_binary(BinaryOp::Mul, Expr::Const(2.0), a);
            }
        }
        BinaryOp::Sub => {
            if b.is_const(0.0) {
                return a;
            }
            if a == b {
                return Expr::Const(0.0);
            }
            if a.is_const(0.0) {
                return simplify_unary(UnaryOp::Neg, b);
            }
        }
        BinaryOp::Mul => {
            if a.is_const(0.0) || b.is_const(0.0) {
                return Expr::Const(0.0);
            }
            if a.is_const(1.0) {
                return b;
            }
            if b.is_const(1.0) {
                return a;
            }
        }
        BinaryOp::Div => {
            if b.is_const(1.0) {
                return a;
            }
        }
        BinaryOp::Pow => {
            if b.is_const(1.0) {
                return a;
            }
            if b.is_const(0.0) {
                return Expr::Const(1.0);
            }
        }
    }
    Expr::Binary(op, Arc::new(a), Arc::new(b))
}

// Folding constructors used by `differentiate` to keep derivative trees small.

fn add(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) {
        return b;
    }
    if b.is_const(0.0) {
        return a;
    }
    Expr::Binary(BinaryOp::Add, Arc::new(a), Arc::new(b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    if b.is_const(0.0) {
        return a;
    }
    if a.is_const(0.0) {
        return neg(b);
    }
    Expr::Binary(BinaryOp::Sub, Arc::new(a), Arc::new(b))
}

fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) || b.is_const(0.0) {
        return Expr::Const(0.0);
    }
    if a.is_const(1.0) {
        return b;
    }
    if b.is_const(1.0) {
        return a;
    }
    Expr::Binary(BinaryOp::Mul, Arc::new(a), Arc::new(b))
}

fn div(a: Expr, b: Expr) -> Expr {
    if b.is_const(1.0) {
        return a;
    }
    Expr::Binary(BinaryOp::Div, Arc::new(a), Arc::new(b))
}

fn neg(a: Expr) -> Expr {
    if let Some(v) = a.as_const() {
        return Expr::Const(-v);
    }
    Expr::Unary(UnaryOp::Neg, Arc::new(a))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(id) | Expr::Param(id) => write!(f, "{id}"),
            Expr::Unary(op, x) => match op {
                UnaryOp::Neg => write!(f, "(-{x})"),
                UnaryOp::Abs => write!(f, "abs({x})"),
                UnaryOp::Sq => write!(f, "sq({x})"),
                UnaryOp::Sqrt => write!(f, "sqrt({x})"),
                UnaryOp::Ln => write!(f, "ln({x})"),
                UnaryOp::Signum => write!(f, "sign({x})"),
            },
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    BinaryOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::External(call) => {
                for i in &call.partials {
                    write!(f, "d{i}[")?;
                }
                write!(f, "{}", call.name)?;
                for _ in &call.partials {
                    write!(f, "]")?;
                }
                write!(f, "(")?;
                for (i, a) in call.args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Add, Arc::new(self), Arc::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Sub, Arc::new(self), Arc::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Mul, Arc::new(self), Arc::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    /// Panics if the denominator folds to the literal constant zero.
    fn div(self, rhs: Expr) -> Expr {
        self.try_div(rhs).expect("division by literal zero")
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Unary(UnaryOp::Neg, Arc::new(self))
    }
}

impl std::ops::Add<f64> for Expr {
    type Output = Expr;
    fn add(self, rhs: f64) -> Expr {
        self + Expr::Const(rhs)
    }
}

impl std::ops::Add<Expr> for f64 {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Const(self) + rhs
    }
}

impl std::ops::Sub<f64> for Expr {
    type Output = Expr;
    fn sub(self, rhs: f64) -> Expr {
        self - Expr::Const(rhs)
    }
}

impl std::ops::Sub<Expr> for f64 {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Const(self) - rhs
    }
}

impl std::ops::Mul<f64> for Expr {
    type Output = Expr;
    fn mul(self, rhs: f64) -> Expr {
        self * Expr::Const(rhs)
    }
}

impl std::ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Const(self) * rhs
    }
}

impl std::ops::Div<f64> for Expr {
    type Output = Expr;
    fn div(self, rhs: f64) -> Expr {
        self / Expr::Const(rhs)
    }
}

impl std::ops::Div<Expr> for f64 {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Const(self) / rhs
    }
}
