//! Connector and component abstractions, connection semantics, flattening,
//! alias elimination, and structural well-posedness checks.
//!
//! A [`ConnectorType`] is a typed bundle of across/through variables; a
//! [`ComponentInstance`] owns node instances of those types plus its internal
//! residual equations. Connecting nodes generates equality residuals for
//! across variables (star topology around the first node) and a single
//! zero-sum residual for through variables, with the convention that a
//! through variable is positive flowing *into* its component.
//!
//! [`flatten`] merges everything into one global algebraic system;
//! [`alias_eliminate`] removes trivial `x - y = 0` and `x - c = 0` equations
//! by substitution; [`structural_check`] verifies the reduced system is
//! square and perfectly matched before it is handed to the solver.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::expr::{Binding, Expr, Ident};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableRole {
    Across,
    Through,
    Internal,
    Parameter,
    RampState,
}

impl fmt::Display for VariableRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariableRole::Across => "across",
            VariableRole::Through => "through",
            VariableRole::Internal => "internal",
            VariableRole::Parameter => "parameter",
            VariableRole::RampState => "ramp-state",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("connector `{0}` declares no variables")]
    EmptyConnector(String),
    #[error("connector `{connector}` declares variable `{name}` twice")]
    DuplicateConnectorVariable { connector: String, name: String },
    #[error("connector variable `{name}` must be across or through, got {role}")]
    BadConnectorRole { name: String, role: VariableRole },
    #[error("invalid name `{0}`: must be non-empty and must not contain `.`")]
    InvalidName(String),
    #[error("component `{component}` declares parameter `{name}` twice")]
    DuplicateParameter { component: String, name: String },
    #[error("component `{component}` declares port `{port}` twice")]
    DuplicatePort { component: String, port: String },
    #[error("component `{component}` declares internal `{name}` twice")]
    DuplicateInternal { component: String, name: String },
    #[error("node `{node}` has no attribute `{name}`")]
    UnknownAttribute { node: String, name: String },
    #[error("node `{node}` is missing attribute `{name}`")]
    MissingAttribute { node: String, name: String },
    #[error("connect needs at least two nodes")]
    TooFewNodes,
    #[error("node `{0}` appears twice in one connect set")]
    DuplicateNode(String),
    #[error(
        "connector mismatch in connect: `{first}` is {first_type} but `{node}` is {node_type}"
    )]
    ConnectorMismatch {
        first: String,
        first_type: String,
        node: String,
        node_type: String,
    },
    #[error("two components share the instance name `{0}`")]
    DuplicateInstance(String),
    #[error("connect references node `{0}` which belongs to no component")]
    UnknownNode(String),
    #[error("equation `{equation}` references `{variable}`, which is not a variable of component `{component}`")]
    UnknownVariable {
        component: String,
        equation: String,
        variable: String,
    },
    #[error("invalid parameter `{name}` of `{component}`: {reason}")]
    InvalidParameter {
        component: String,
        name: String,
        reason: String,
    },
}

/// One across or through variable of a connector, with its unit label and
/// the default initial guess the owning domain supplies for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorVar {
    pub name: String,
    pub role: VariableRole,
    pub unit: String,
    pub guess: f64,
}

/// A typed bundle of across/through variables forming a component port.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorType {
    pub name: String,
    pub variables: Vec<ConnectorVar>,
    /// Fixed per-node attributes (e.g. elevation); values live on the node.
    pub attributes: Vec<String>,
}

impl ConnectorType {
    /// Declare a connector type. Variables are `(name, role, unit, guess)`.
    pub fn declare(
        name: &str,
        variables: &[(&str, VariableRole, &str, f64)],
        attributes: &[&str],
    ) -> Result<Arc<ConnectorType>, ModelError> {
        check_name(name)?;
        if variables.is_empty() {
            return Err(ModelError::EmptyConnector(name.to_string()));
        }
        let mut seen = HashSet::new();
        let mut vars = Vec::with_capacity(variables.len());
        for (vname, role, unit, guess) in variables {
            check_name(vname)?;
            if !matches!(role, VariableRole::Across | VariableRole::Through) {
                return Err(ModelError::BadConnectorRole {
                    name: vname.to_string(),
                    role: *role,
                });
            }
            if !seen.insert(vname.to_string()) {
                return Err(ModelError::DuplicateConnectorVariable {
                    connector: name.to_string(),
                    name: vname.to_string(),
                });
            }
            vars.push(ConnectorVar {
                name: vname.to_string(),
                role: *role,
                unit: unit.to_string(),
                guess: *guess,
            });
        }
        for a in attributes {
            check_name(a)?;
            if !seen.insert(a.to_string()) {
                return Err(ModelError::DuplicateConnectorVariable {
                    connector: name.to_string(),
                    name: a.to_string(),
                });
            }
        }
        Ok(Arc::new(ConnectorType {
            name: name.to_string(),
            variables: vars,
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
        }))
    }

    pub fn variable(&self, name: &str) -> Option<&ConnectorVar> {
        self.variables.iter().find(|v| v.name == name)
    }
}

fn check_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty() || name.contains('.') || name.contains(char::is_whitespace) {
        return Err(ModelError::InvalidName(name.to_string()));
    }
    Ok(())
}

/// A connector instance attached to a component port, addressed as
/// `instance.port`; its variables are `instance.port.var`.
#[derive(Debug, Clone)]
pub struct NodeInstance {
    pub path: String,
    pub connector: Arc<ConnectorType>,
    pub attributes: BTreeMap<String, f64>,
}

impl NodeInstance {
    pub fn var_path(&self, var: &str) -> String {
        format!("{}.{}", self.path, var)
    }

    /// Expression referencing one of this node's variables.
    ///
    /// Panics if the connector has no such variable (a component-builder bug,
    /// not a model error).
    pub fn var(&self, name: &str) -> Expr {
        assert!(
            self.connector.variable(name).is_some(),
            "connector `{}` has no variable `{name}`",
            self.connector.name
        );
        Expr::var(self.var_path(name))
    }

    pub fn attribute(&self, name: &str) -> f64 {
        self.attributes[name]
    }
}

/// Reported parameter value (values are folded into component equations as
/// constants; the table exists for diagnostics and reports).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub path: String,
    pub value: f64,
    pub unit: String,
}

/// Analytic closure of a ramp-state variable: `value(t) = initial + rate * t`.
/// The variable enters equations as a parameter bound per solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RampClosure {
    pub path: String,
    pub initial: f64,
    pub rate: f64,
    pub unit: String,
}

impl RampClosure {
    pub fn value_at(&self, t: f64) -> f64 {
        self.initial + self.rate * t
    }
}

/// Internal (non-port) variable of a component.
#[derive(Debug, Clone)]
pub struct InternalVar {
    pub path: String,
    pub role: VariableRole,
    pub unit: String,
    pub guess: f64,
    pub ramp: Option<(f64, f64)>, // (initial, rate) for ramp-state closures
}

/// A residual equation `expr = 0` with a diagnostic label.
#[derive(Debug, Clone)]
pub struct Equation {
    pub label: String,
    pub expr: Expr,
}

impl Equation {
    pub fn new(label: impl Into<String>, expr: Expr) -> Equation {
        Equation {
            label: label.into(),
            expr,
        }
    }
}

/// Named parameters + nodes + internal residual equations.
#[derive(Debug, Clone)]
pub struct ComponentInstance {
    pub name: String,
    pub parameters: Vec<ParamEntry>,
    pub nodes: Vec<NodeInstance>,
    pub internals: Vec<InternalVar>,
    pub equations: Vec<Equation>,
}

impl ComponentInstance {
    pub fn new(name: &str) -> Result<ComponentInstance, ModelError> {
        check_name(name)?;
        Ok(ComponentInstance {
            name: name.to_string(),
            parameters: Vec::new(),
            nodes: Vec::new(),
            internals: Vec::new(),
            equations: Vec::new(),
        })
    }

    pub fn add_parameter(&mut self, name: &str, value: f64, unit: &str) -> Result<(), ModelError> {
        check_name(name)?;
        let path = format!("{}.{}", self.name, name);
        if self.parameters.iter().any(|p| p.path == path) {
            return Err(ModelError::DuplicateParameter {
                component: self.name.clone(),
                name: name.to_string(),
            });
        }
        self.parameters.push(ParamEntry {
            path,
            value,
            unit: unit.to_string(),
        });
        Ok(())
    }

    /// Attach a node of `connector` at `port`; all fixed attributes of the
    /// connector must be supplied.
    pub fn add_node(
        &mut self,
        port: &str,
        connector: &Arc<ConnectorType>,
        attributes: &[(&str, f64)],
    ) -> Result<&NodeInstance, ModelError> {
        check_name(port)?;
        let path = format!("{}.{}", self.name, port);
        if self.nodes.iter().any(|n| n.path == path) {
            return Err(ModelError::DuplicatePort {
                component: self.name.clone(),
                port: port.to_string(),
            });
        }
        let mut attrs = BTreeMap::new();
        for (aname, avalue) in attributes {
            if !connector.attributes.iter().any(|a| a == aname) {
                return Err(ModelError::UnknownAttribute {
                    node: path.clone(),
                    name: aname.to_string(),
                });
            }
            attrs.insert(aname.to_string(), *avalue);
        }
        for a in &connector.attributes {
            if !attrs.contains_key(a) {
                return Err(ModelError::MissingAttribute {
                    node: path.clone(),
                    name: a.clone(),
                });
            }
        }
        self.nodes.push(NodeInstance {
            path,
            connector: connector.clone(),
            attributes: attrs,
        });
        Ok(self.nodes.last().unwrap())
    }

    pub fn add_internal(
        &mut self,
        name: &str,
        role: VariableRole,
        unit: &str,
        guess: f64,
        ramp: Option<(f64, f64)>,
    ) -> Result<String, ModelError> {
        check_name(name)?;
        let path = format!("{}.{}", self.name, name);
        if self.internals.iter().any(|v| v.path == path) {
            return Err(ModelError::DuplicateInternal {
                component: self.name.clone(),
                name: name.to_string(),
            });
        }
        self.internals.push(InternalVar {
            path: path.clone(),
            role,
            unit: unit.to_string(),
            guess,
            ramp,
        });
        Ok(path)
    }

    pub fn add_equation(&mut self, label: &str, expr: Expr) {
        self.equations
            .push(Equation::new(format!("{}.{}", self.name, label), expr));
    }

    pub fn node(&self, port: &str) -> Option<&NodeInstance> {
        let path = format!("{}.{}", self.name, port);
        self.nodes.iter().find(|n| n.path == path)
    }

    /// Every variable referenced by the internal equations must belong to
    /// this instance's nodes or internals; parameter references must name a
    /// declared ramp-state internal.
    fn validate(&self) -> Result<(), ModelError> {
        let mut vars: HashSet<String> = HashSet::new();
        for node in &self.nodes {
            for v in &node.connector.variables {
                vars.insert(node.var_path(&v.name));
            }
        }
        let mut ramp_vars: HashSet<&str> = HashSet::new();
        for internal in &self.internals {
            if internal.role == VariableRole::RampState {
                ramp_vars.insert(&internal.path);
            } else {
                vars.insert(internal.path.clone());
            }
        }
        for eq in &self.equations {
            for v in eq.expr.free_vars() {
                if !vars.contains(&*v) {
                    return Err(ModelError::UnknownVariable {
                        component: self.name.clone(),
                        equation: eq.label.clone(),
                        variable: v.to_string(),
                    });
                }
            }
            for p in eq.expr.free_params() {
                if !ramp_vars.contains(&*p) {
                    return Err(ModelError::UnknownVariable {
                        component: self.name.clone(),
                        equation: eq.label.clone(),
                        variable: p.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Lightweight reference to a node inside a connect set.
#[derive(Debug, Clone)]
pub struct NodeRef {
    pub path: String,
    pub connector: Arc<ConnectorType>,
}

/// An ordered list of ≥2 nodes of the same connector type to be fused.
#[derive(Debug, Clone)]
pub struct ConnectSet {
    pub nodes: Vec<NodeRef>,
}

/// Record a connection between nodes. All nodes must share one connector
/// type and no node may appear twice.
pub fn connect(nodes: &[&NodeInstance]) -> Result<ConnectSet, ModelError> {
    if nodes.len() < 2 {
        return Err(ModelError::TooFewNodes);
    }
    let first = nodes[0];
    let mut seen = HashSet::new();
    let mut refs = Vec::with_capacity(nodes.len());
    for node in nodes {
        if *node.connector != *first.connector {
            return Err(ModelError::ConnectorMismatch {
                first: first.path.clone(),
                first_type: first.connector.name.clone(),
                node: node.path.clone(),
                node_type: node.connector.name.clone(),
            });
        }
        if !seen.insert(node.path.clone()) {
            return Err(ModelError::DuplicateNode(node.path.clone()));
        }
        refs.push(NodeRef {
            path: node.path.clone(),
            connector: node.connector.clone(),
        });
    }
    Ok(ConnectSet { nodes: refs })
}

/// Connection residuals for one set of `k` fused nodes: for each across
/// variable, `k-1` pairwise equalities chained to the first node; for each
/// through variable, one zero-sum residual over all nodes.
pub fn generate_connection_equations(set: &ConnectSet) -> Vec<Equation> {
    let mut out = Vec::new();
    let first = &set.nodes[0];
    for var in &first.connector.variables {
        match var.role {
            VariableRole::Across => {
                for other in &set.nodes[1..] {
                    let label = format!(
                        "connect {}.{} ~ {}.{}",
                        first.path, var.name, other.path, var.name
                    );
                    let expr = Expr::var(format!("{}.{}", first.path, var.name))
                        - Expr::var(format!("{}.{}", other.path, var.name));
                    out.push(Equation::new(label, expr));
                }
            }
            VariableRole::Through => {
                let paths: Vec<String> = set
                    .nodes
                    .iter()
                    .map(|n| format!("{}.{}", n.path, var.name))
                    .collect();
                let label = format!("connect sum({})", paths.join(" + "));
                let mut expr = Expr::var(paths[0].clone());
                for p in &paths[1..] {
                    expr = expr + Expr::var(p.clone());
                }
                out.push(Equation::new(label, expr));
            }
            _ => unreachable!("connector variables are across or through"),
        }
    }
    out
}

/// One unknown of the flattened system.
#[derive(Debug, Clone)]
pub struct VarEntry {
    pub path: String,
    pub role: VariableRole,
    pub unit: String,
    pub guess: f64,
}

/// Representative of an eliminated variable.
#[derive(Debug, Clone, PartialEq)]
pub enum AliasTarget {
    Variable(String),
    Constant(f64),
}

/// The flattened global equation set.
#[derive(Debug, Clone, Default)]
pub struct FlatSystem {
    pub variables: Vec<VarEntry>,
    pub equations: Vec<Equation>,
    pub aliases: BTreeMap<String, AliasTarget>,
    pub parameters: Vec<ParamEntry>,
    pub ramps: Vec<RampClosure>,
    pub connects: Vec<ConnectSet>,
    /// Equations that folded to `0 = 0` during alias elimination and were dropped.
    pub trivial_dropped: usize,
}

impl FlatSystem {
    pub fn variable(&self, path: &str) -> Option<&VarEntry> {
        self.variables.iter().find(|v| v.path == path)
    }

    /// Parameter binding for one solve: ramp closures instantiated at `t`.
    pub fn binding_at(&self, t: f64) -> Binding {
        let mut b = Binding::new();
        for ramp in &self.ramps {
            b.set_param(ramp.path.clone(), ramp.value_at(t));
        }
        b
    }

    /// Deterministic diagnostic dump of the flattened system.
    pub fn render_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variables ({}):", self.variables.len());
        for v in &self.variables {
            let _ = writeln!(s, "  {}  [{}, {}]", v.path, v.role, v.unit);
        }
        let _ = writeln!(s, "parameters ({}):", self.parameters.len());
        for p in &self.parameters {
            let _ = writeln!(s, "  {} = {}  [{}]", p.path, p.value, p.unit);
        }
        if !self.ramps.is_empty() {
            let _ = writeln!(s, "ramps ({}):", self.ramps.len());
            for r in &self.ramps {
                let _ = writeln!(
                    s,
                    "  {} = {} + {}*t  [{}]",
                    r.path, r.initial, r.rate, r.unit
                );
            }
        }
        let _ = writeln!(s, "aliases ({}):", self.aliases.len());
        for (from, to) in &self.aliases {
            match to {
                AliasTarget::Variable(rep) => {
                    let _ = writeln!(s, "  {from} -> {rep}");
                }
                AliasTarget::Constant(c) => {
                    let _ = writeln!(s, "  {from} -> {c}");
                }
            }
        }
        let _ = writeln!(s, "equations ({}):", self.equations.len());
        for eq in &self.equations {
            let _ = writeln!(s, "  {}: {} = 0", eq.label, eq.expr);
        }
        s
    }
}

/// Merge component and connection equations into one global system.
///
/// Variables are qualified as `instance.port.var`; ordering follows the
/// component list, then port order, then connector declaration order, so
/// identical input yields an identical system.
pub fn flatten(
    components: &[ComponentInstance],
    connects: &[ConnectSet],
) -> Result<FlatSystem, ModelError> {
    let mut names = HashSet::new();
    for c in components {
        if !names.insert(c.name.clone()) {
            return Err(ModelError::DuplicateInstance(c.name.clone()));
        }
        c.validate()?;
    }

    let mut fs = FlatSystem::default();
    let mut node_types: HashMap<String, Arc<ConnectorType>> = HashMap::new();

    for c in components {
        for node in &c.nodes {
            node_types.insert(node.path.clone(), node.connector.clone());
            for v in &node.connector.variables {
                fs.variables.push(VarEntry {
                    path: node.var_path(&v.name),
                    role: v.role,
                    unit: v.unit.clone(),
                    guess: v.guess,
                });
            }
        }
        for internal in &c.internals {
            if internal.role == VariableRole::RampState {
                let (initial, rate) = internal.ramp.unwrap_or((internal.guess, 0.0));
                fs.ramps.push(RampClosure {
                    path: internal.path.clone(),
                    initial,
                    rate,
                    unit: internal.unit.clone(),
                });
            } else {
                fs.variables.push(VarEntry {
                    path: internal.path.clone(),
                    role: internal.role,
                    unit: internal.unit.clone(),
                    guess: internal.guess,
                });
            }
        }
        fs.parameters.extend(c.parameters.iter().cloned());
        fs.equations.extend(c.equations.iter().cloned());
    }

    for set in connects {
        for node in &set.nodes {
            match node_types.get(&node.path) {
                None => return Err(ModelError::UnknownNode(node.path.clone())),
                Some(t) => {
                    if **t != *node.connector {
                        return Err(ModelError::ConnectorMismatch {
                            first: node.path.clone(),
                            first_type: t.name.clone(),
                            node: node.path.clone(),
                            node_type: node.connector.name.clone(),
                        });
                    }
                }
            }
        }
        fs.equations.extend(generate_connection_equations(set));
    }
    fs.connects = connects.to_vec();
    Ok(fs)
}

/// Union-find over variable equality classes; a class may carry one pinned
/// constant value.
struct Classes {
    parent: Vec<usize>,
    constant: Vec<Option<f64>>,
}

impl Classes {
    fn new(n: usize) -> Self {
        Classes {
            parent: (0..n).collect(),
            constant: vec![None; n],
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    /// Merge classes, keeping the lower index as root. `Ok(true)` when the
    /// merge removed a degree of freedom, `Ok(false)` when it was redundant,
    /// and the conflict `(a, b)` if both classes pin different constants.
    fn union(&mut self, i: usize, j: usize) -> Result<bool, (f64, f64)> {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri == rj {
            return Ok(false);
        }
        let (keep, drop) = if ri < rj { (ri, rj) } else { (rj, ri) };
        let productive = match (self.constant[keep], self.constant[drop]) {
            (Some(a), Some(b)) => {
                if a != b {
                    return Err((a, b));
                }
                false // both classes were already pinned to the same value
            }
            (None, Some(b)) => {
                self.constant[keep] = Some(b);
                true
            }
            _ => true,
        };
        self.parent[drop] = keep;
        Ok(productive)
    }

    /// Pin a class to a constant. Returns the conflict if already pinned to a
    /// different value, and `Ok(false)` if this pin was redundant.
    fn pin(&mut self, i: usize, value: f64) -> Result<bool, (f64, f64)> {
        let r = self.find(i);
        match self.constant[r] {
            Some(existing) if existing != value => Err((existing, value)),
            Some(_) => Ok(false),
            None => {
                self.constant[r] = Some(value);
                Ok(true)
            }
        }
    }
}

/// Remove trivial equality equations by substitution.
///
/// Equations of the exact form `x - y = 0` merge the two variables into one
/// equality class; `x - c = 0` (or `c - x = 0`) pins the class to a constant.
/// Every non-representative member is replaced throughout the remaining
/// equations and recorded in the alias map. Equations that fold to `0 = 0`
/// are dropped and counted; a pin conflict is kept as a constant nonzero
/// residual so the structural check reports the inconsistency instead of
/// silently dropping it.
pub fn alias_eliminate(fs: &FlatSystem) -> FlatSystem {
    use crate::expr::BinaryOp;

    let index: HashMap<&str, usize> = fs
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.path.as_str(), i))
        .collect();
    let mut classes = Classes::new(fs.variables.len());
    let mut kept: Vec<&Equation> = Vec::new();
    let mut conflicts: Vec<Equation> = Vec::new();
    let mut trivial = fs.trivial_dropped;

    for eq in &fs.equations {
        let alias = match &eq.expr {
            Expr::Binary(BinaryOp::Sub, a, b) => match (&**a, &**b) {
                (Expr::Var(x), Expr::Var(y)) => match (index.get(&**x), index.get(&**y)) {
                    (Some(&i), Some(&j)) => Some(classes.union(i, j)),
                    _ => None,
                },
                (Expr::Var(x), Expr::Const(c)) => index.get(&**x).map(|&i| classes.pin(i, *c)),
                (Expr::Const(c), Expr::Var(x)) => index.get(&**x).map(|&i| classes.pin(i, *c)),
                _ => None,
            },
            _ => None,
        };
        match alias {
            Some(Ok(true)) => {}
            Some(Ok(false)) => trivial += 1, // redundant equality
            Some(Err((a, b))) => conflicts.push(Equation::new(
                format!("{} (conflicting pins)", eq.label),
                Expr::Const(a - b),
            )),
            None => kept.push(eq),
        }
    }

    // Depth-one substitution map: every eliminated member points at its
    // class representative (the constant if the class is pinned).
    let mut subst: HashMap<Ident, Expr> = HashMap::new();
    let mut aliases = fs.aliases.clone();
    let mut eliminated = vec![false; fs.variables.len()];
    for (i, gone) in eliminated.iter_mut().enumerate() {
        let root = classes.find(i);
        match classes.constant[root] {
            Some(c) => {
                *gone = true;
                subst.insert(Ident::from(fs.variables[i].path.as_str()), Expr::Const(c));
                aliases.insert(fs.variables[i].path.clone(), AliasTarget::Constant(c));
            }
            None if root != i => {
                *gone = true;
                let rep = fs.variables[root].path.clone();
                subst.insert(
                    Ident::from(fs.variables[i].path.as_str()),
                    Expr::var(rep.clone()),
                );
                aliases.insert(fs.variables[i].path.clone(), AliasTarget::Variable(rep));
            }
            None => {}
        }
    }

    let mut out = FlatSystem {
        variables: fs
            .variables
            .iter()
            .enumerate()
            .filter(|(i, _)| !eliminated[*i])
            .map(|(_, v)| v.clone())
            .collect(),
        equations: Vec::with_capacity(kept.len()),
        aliases,
        parameters: fs.parameters.clone(),
        ramps: fs.ramps.clone(),
        connects: fs.connects.clone(),
        trivial_dropped: trivial,
    };

    for eq in kept {
        let rewritten = eq
            .expr
            .substitute(&subst)
            .expect("alias substitution map is acyclic by construction")
            .simplify();
        if rewritten.as_const() == Some(0.0) {
            out.trivial_dropped += 1;
            continue;
        }
        out.equations
            .push(Equation::new(eq.label.clone(), rewritten));
    }
    out.equations.extend(conflicts);
    out
}

/// Structural well-posedness report: equation/unknown counts and a maximum
/// bipartite matching on the variable-occurrence graph.
#[derive(Debug, Clone)]
pub struct StructuralReport {
    pub n_equations: usize,
    pub n_unknowns: usize,
    pub matched: usize,
    pub unmatched_variables: Vec<String>,
    pub unmatched_equations: Vec<String>,
    pub aliases_eliminated: usize,
    pub trivial_dropped: usize,
}

impl StructuralReport {
    /// A system is well-posed iff it is square and perfectly matched.
    pub fn is_ok(&self) -> bool {
        self.n_equations == self.n_unknowns && self.matched == self.n_unknowns
    }
}

impl fmt::Display for StructuralReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "equations: {}", self.n_equations)?;
        writeln!(f, "unknowns: {}", self.n_unknowns)?;
        writeln!(
            f,
            "aliases eliminated: {}, trivial equations dropped: {}",
            self.aliases_eliminated, self.trivial_dropped
        )?;
        writeln!(f, "matched: {}", self.matched)?;
        if !self.unmatched_variables.is_empty() {
            writeln!(
                f,
                "dangling variables: {}",
                self.unmatched_variables.join(", ")
            )?;
        }
        if !self.unmatched_equations.is_empty() {
            writeln!(
                f,
                "dangling equations: {}",
                self.unmatched_equations.join(", ")
            )?;
        }
        write!(
            f,
            "status: {}",
            if self.is_ok() { "ok" } else { "not well-posed" }
        )
    }
}

/// Check that the (alias-eliminated) system is square and that a perfect
/// equation-variable matching exists.
pub fn structural_check(fs: &FlatSystem) -> StructuralReport {
    let index: HashMap<&str, usize> = fs
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.path.as_str(), i))
        .collect();

    // adjacency: equation -> variables occurring in it
    let adj: Vec<Vec<usize>> = fs
        .equations
        .iter()
        .map(|eq| {
            eq.expr
                .free_vars()
                .iter()
                .filter_map(|v| index.get(&**v).copied())
                .collect()
        })
        .collect();

    let (matched, eq_match, var_match) = maximum_matching(&adj, fs.variables.len());

    StructuralReport {
        n_equations: fs.equations.len(),
        n_unknowns: fs.variables.len(),
        matched,
        unmatched_variables: fs
            .variables
            .iter()
            .enumerate()
            .filter(|(i, _)| var_match[*i].is_none())
            .map(|(_, v)| v.path.clone())
            .collect(),
        unmatched_equations: fs
            .equations
            .iter()
            .enumerate()
            .filter(|(i, _)| eq_match[*i].is_none())
            .map(|(_, eq)| eq.label.clone())
            .collect(),
        aliases_eliminated: fs.aliases.len(),
        trivial_dropped: fs.trivial_dropped,
    }
}

/// Kuhn's augmenting-path maximum bipartite matching.
fn maximum_matching(
    adj: &[Vec<usize>],
    n_vars: usize,
) -> (usize, Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut var_match: Vec<Option<usize>> = vec![None; n_vars];
    let mut eq_match: Vec<Option<usize>> = vec![None; adj.len()];

    fn augment(
        eq: usize,
        adj: &[Vec<usize>],
        var_match: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &v in &adj[eq] {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            if var_match[v].is_none() || augment(var_match[v].unwrap(), adj, var_match, visited) {
                var_match[v] = Some(eq);
                return true;
            }
        }
        false
    }

    let mut matched = 0;
    for eq in 0..adj.len() {
        let mut visited = vec![false; n_vars];
        if augment(eq, adj, &mut var_match, &mut visited) {
            matched += 1;
        }
    }
    for (v, m) in var_match.iter().enumerate() {
        if let Some(eq) = m {
            eq_match[*eq] = Some(v);
        }
    }
    (matched, eq_match, var_match)
}
