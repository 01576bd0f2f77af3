//! Thermodynamic process components over a pluggable fluid-property backend.
//!
//! A stream port carries the five state variables pressure, temperature,
//! density, specific enthalpy, and specific entropy (all across, unit-mass
//! basis — there is no through variable, so connecting `k` ports yields
//! `5(k-1)` equality residuals and no balance residual).
//!
//! Each process pins one property between its ports (`Δs = 0`, `Δp = 0`, …)
//! and closes its outlet state from the pinned property plus one more
//! "closure state" via the backend. Backend calls enter the equation system
//! as opaque function nodes whose Jacobian contributions are taken by
//! central differences, so the property interface stays pluggable without
//! symbolic access to its interior.

pub mod backend;

pub use backend::{
    ideal_gas_backend, toy_water_backend, IdealGas, Prop, PropertyBackend, PropertyError, Quality,
    ReferenceState, State, ToyWater,
};

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use crate::expr::{Expr, ExternalFn};
use crate::model::{
    connect, ComponentInstance, ConnectSet, ConnectorType, ModelError, NodeInstance, VariableRole,
};

/// Stream connector: the five state variables, all across.
pub fn stream_port() -> Arc<ConnectorType> {
    static STREAM_PORT: OnceLock<Arc<ConnectorType>> = OnceLock::new();
    STREAM_PORT
        .get_or_init(|| {
            ConnectorType::declare(
                "StreamPort",
                &[
                    ("p", VariableRole::Across, "Pa", 101325.0),
                    ("T", VariableRole::Across, "K", 300.0),
                    ("rho", VariableRole::Across, "kg/m3", 1000.0),
                    ("h", VariableRole::Across, "J/kg", 0.0),
                    ("s", VariableRole::Across, "J/(kg.K)", 0.0),
                ],
                &[],
            )
            .expect("static connector")
        })
        .clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Isothermal,
    Isobaric,
    Isentropic,
    Isenthalpic,
    Isochoric,
}

impl ProcessKind {
    /// The property conserved across the process.
    pub fn pinned(&self) -> Prop {
        match self {
            ProcessKind::Isothermal => Prop::T,
            ProcessKind::Isobaric => Prop::P,
            ProcessKind::Isentropic => Prop::S,
            ProcessKind::Isenthalpic => Prop::H,
            ProcessKind::Isochoric => Prop::D,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessKind::Isothermal => "isothermal",
            ProcessKind::Isobaric => "isobaric",
            ProcessKind::Isentropic => "isentropic",
            ProcessKind::Isenthalpic => "isenthalpic",
            ProcessKind::Isochoric => "isochoric",
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl FromStr for ProcessKind {
    type Err = ThermoError;

    fn from_str(s: &str) -> Result<Self, ThermoError> {
        match s {
            "isothermal" => Ok(ProcessKind::Isothermal),
            "isobaric" => Ok(ProcessKind::Isobaric),
            "isentropic" => Ok(ProcessKind::Isentropic),
            "isenthalpic" => Ok(ProcessKind::Isenthalpic),
            "isochoric" => Ok(ProcessKind::Isochoric),
            other => Err(ThermoError::BadProcessKind(other.to_string())),
        }
    }
}

/// The closure state of a process outlet: a second property, or a point on
/// the saturation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterState {
    Property(Prop),
    Saturation(Quality),
}

impl InterState {
    pub fn parse(code: &str) -> Result<InterState, ThermoError> {
        if let Some(q) = Quality::from_code(code) {
            return Ok(InterState::Saturation(q));
        }
        Prop::from_code(code)
            .map(InterState::Property)
            .ok_or_else(|| ThermoError::BadPropertyCode(code.to_string()))
    }
}

impl fmt::Display for InterState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterState::Property(p) => write!(f, "{}", p.code()),
            InterState::Saturation(q) => write!(f, "{}", q.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThermoError {
    #[error("{kind} process can't accept {prop} as its closure state; choose another state")]
    InterStateClash { kind: ProcessKind, prop: Prop },
    #[error("a saturation closure anchors on P or T, but the {kind} process pins {prop}")]
    SaturationAnchor { kind: ProcessKind, prop: Prop },
    #[error("ramp boundary states are supported on P or T only, got {0}")]
    RampProperty(Prop),
    #[error("boundary value for {prop} must be finite, got {value}")]
    NonFiniteBoundary { prop: Prop, value: f64 },
    #[error("unknown property code `{0}`")]
    BadPropertyCode(String),
    #[error("unknown process kind `{0}`")]
    BadProcessKind(String),
    #[error(transparent)]
    Property(#[from] PropertyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn backend_call(
    backend: &Arc<dyn PropertyBackend>,
    target: Prop,
    a: Prop,
    b: Prop,
    args: Vec<Expr>,
) -> Expr {
    let be = backend.clone();
    let func: Arc<dyn ExternalFn> = Arc::new(move |argv: &[f64]| -> Result<f64, String> {
        be.closure(a, argv[0], b, argv[1])
            .map(|st| st.get(target))
            .map_err(|e| e.to_string())
    });
    let name = format!(
        "{}.{}({},{})",
        backend.name(),
        target.code(),
        a.code(),
        b.code()
    );
    Expr::external(name, func, args)
}

fn saturation_call(
    backend: &Arc<dyn PropertyBackend>,
    target: Prop,
    q: Quality,
    anchor: Prop,
    arg: Expr,
) -> Expr {
    let be = backend.clone();
    let func: Arc<dyn ExternalFn> = Arc::new(move |argv: &[f64]| -> Result<f64, String> {
        be.saturation(q, anchor, argv[0])
            .map(|st| st.get(target))
            .map_err(|e| e.to_string())
    });
    let name = format!(
        "{}.{}({}@{})",
        backend.name(),
        target.code(),
        q.code(),
        anchor.code()
    );
    Expr::external(name, func, vec![arg])
}

/// Residuals expressing the three remaining properties of `node` as backend
/// evaluations of `(known_a, known_b)`. Returns `(label, expr)` pairs.
pub fn state_closure(
    node: &NodeInstance,
    known_a: Prop,
    known_b: Prop,
    backend: &Arc<dyn PropertyBackend>,
) -> Result<Vec<(String, Expr)>, ThermoError> {
    backend.check_pair(known_a, known_b)?;
    let args = vec![node.var(known_a.var_name()), node.var(known_b.var_name())];
    let mut out = Vec::with_capacity(3);
    for target in Prop::ALL {
        if target == known_a || target == known_b {
            continue;
        }
        let expr = node.var(target.var_name())
            - backend_call(backend, target, known_a, known_b, args.clone());
        out.push((format!("close_{}", target.var_name()), expr));
    }
    Ok(out)
}

/// Residuals pinning `node` to the saturation boundary at its own `anchor`
/// property (four residuals, one per remaining property).
pub fn saturation_state_closure(
    node: &NodeInstance,
    q: Quality,
    anchor: Prop,
    backend: &Arc<dyn PropertyBackend>,
) -> Result<Vec<(String, Expr)>, ThermoError> {
    if !backend.supports_saturation() {
        return Err(ThermoError::Property(PropertyError::NoSaturation(
            backend.name().to_string(),
        )));
    }
    if !matches!(anchor, Prop::P | Prop::T) {
        return Err(ThermoError::Property(PropertyError::BadSaturationAnchor(
            anchor,
        )));
    }
    let arg = node.var(anchor.var_name());
    let mut out = Vec::with_capacity(4);
    for target in Prop::ALL {
        if target == anchor {
            continue;
        }
        let expr =
            node.var(target.var_name()) - saturation_call(backend, target, q, anchor, arg.clone());
        out.push((format!("close_{}", target.var_name()), expr));
    }
    Ok(out)
}

/// Two-port process component: pins one property between `in` and `out` and
/// closes the outlet state from `(pinned, inter_state)` via the backend.
/// With a saturation closure state the outlet is pinned to the boundary at
/// the process's own conserved property, which must then be `P` or `T`.
pub fn make_process(
    name: &str,
    kind: ProcessKind,
    inter_state: InterState,
    backend: &Arc<dyn PropertyBackend>,
) -> Result<ComponentInstance, ThermoError> {
    let pinned = kind.pinned();
    let mut comp = ComponentInstance::new(name)?;
    comp.add_node("in", &stream_port(), &[])?;
    comp.add_node("out", &stream_port(), &[])?;
    let inlet = comp.node("in").unwrap().clone();
    let outlet = comp.node("out").unwrap().clone();

    comp.add_equation(
        &format!("pin_{}", pinned.var_name()),
        outlet.var(pinned.var_name()) - inlet.var(pinned.var_name()),
    );

    let closures = match inter_state {
        InterState::Property(prop) => {
            if prop == pinned {
                return Err(ThermoError::InterStateClash { kind, prop });
            }
            state_closure(&outlet, pinned, prop, backend)?
        }
        InterState::Saturation(q) => {
            if !matches!(pinned, Prop::P | Prop::T) {
                return Err(ThermoError::SaturationAnchor { kind, prop: pinned });
            }
            saturation_state_closure(&outlet, q, pinned, backend)?
        }
    };
    for (label, expr) in closures {
        comp.add_equation(&label, expr);
    }
    Ok(comp)
}

/// Fixed or ramped boundary condition on one property.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryStateSpec {
    Fixed {
        property: Prop,
        value: f64,
    },
    Ramp {
        property: Prop,
        initial: f64,
        rate: f64,
    },
}

/// Single-node component pinning one property of its `node` port, either to
/// a fixed value or to the ramp `u0 + rate·t` closed analytically per solve.
pub fn make_boundary_state(
    name: &str,
    spec: BoundaryStateSpec,
) -> Result<ComponentInstance, ThermoError> {
    let mut comp = ComponentInstance::new(name)?;
    comp.add_node("node", &stream_port(), &[])?;
    let node = comp.node("node").unwrap().clone();
    match spec {
        BoundaryStateSpec::Fixed { property, value } => {
            if !value.is_finite() {
                return Err(ThermoError::NonFiniteBoundary {
                    prop: property,
                    value,
                });
            }
            comp.add_parameter(property.code(), value, property.unit())?;
            comp.add_equation(
                &format!("set_{}", property.var_name()),
                node.var(property.var_name()) - Expr::constant(value),
            );
        }
        BoundaryStateSpec::Ramp {
            property,
            initial,
            rate,
        } => {
            if !matches!(property, Prop::P | Prop::T) {
                return Err(ThermoError::RampProperty(property));
            }
            if !initial.is_finite() || !rate.is_finite() {
                return Err(ThermoError::NonFiniteBoundary {
                    prop: property,
                    value: initial + rate,
                });
            }
            let ramp = comp.add_internal(
                &format!("{}_set", property.var_name()),
                VariableRole::RampState,
                property.unit(),
                initial,
                Some((initial, rate)),
            )?;
            comp.add_equation(
                &format!("set_{}", property.var_name()),
                node.var(property.var_name()) - Expr::param(ramp),
            );
        }
    }
    Ok(comp)
}

/// Single-node source that fully closes its state from two pinned
/// properties; boundary anchor for open process chains.
pub fn make_source_state(
    name: &str,
    prop_a: Prop,
    value_a: f64,
    prop_b: Prop,
    value_b: f64,
    backend: &Arc<dyn PropertyBackend>,
) -> Result<ComponentInstance, ThermoError> {
    let mut comp = ComponentInstance::new(name)?;
    comp.add_node("node", &stream_port(), &[])?;
    let node = comp.node("node").unwrap().clone();
    for (prop, value) in [(prop_a, value_a), (prop_b, value_b)] {
        if !value.is_finite() {
            return Err(ThermoError::NonFiniteBoundary { prop, value });
        }
        comp.add_parameter(prop.code(), value, prop.unit())?;
        comp.add_equation(
            &format!("set_{}", prop.var_name()),
            node.var(prop.var_name()) - Expr::constant(value),
        );
    }
    for (label, expr) in state_closure(&node, prop_a, prop_b, backend)? {
        comp.add_equation(&label, expr);
    }
    Ok(comp)
}

/// Bundled example systems.
pub mod demo {
    use super::*;

    /// Reheat Rankine cycle: pump → boiler → turbine → reboiler → returbine
    /// → condenser, closed in a loop, with the pump outlet pressure ramping
    /// down from 18 MPa at 0.1 MPa/s and the condenser pinned to saturated
    /// liquid.
    pub fn reheat_rankine(
        backend: &Arc<dyn PropertyBackend>,
    ) -> Result<(Vec<ComponentInstance>, Vec<ConnectSet>), ThermoError> {
        let pump = make_process(
            "pump",
            ProcessKind::Isentropic,
            InterState::Property(Prop::P),
            backend,
        )?;
        let pump_p = make_boundary_state(
            "pump_P",
            BoundaryStateSpec::Ramp {
                property: Prop::P,
                initial: 18.0e6,
                rate: -1.0e5,
            },
        )?;
        let boiler = make_process(
            "boiler",
            ProcessKind::Isobaric,
            InterState::Property(Prop::T),
            backend,
        )?;
        let boiler_t = make_boundary_state(
            "boiler_T",
            BoundaryStateSpec::Fixed {
                property: Prop::T,
                value: 550.0 + 273.15,
            },
        )?;
        let turbine = make_process(
            "turbine",
            ProcessKind::Isentropic,
            InterState::Property(Prop::P),
            backend,
        )?;
        let turbine_p = make_boundary_state(
            "turbine_P",
            BoundaryStateSpec::Fixed {
                property: Prop::P,
                value: 3.0e6,
            },
        )?;
        let reboiler = make_process(
            "reboiler",
            ProcessKind::Isobaric,
            InterState::Property(Prop::T),
            backend,
        )?;
        let reboiler_t = make_boundary_state(
            "reboiler_T",
            BoundaryStateSpec::Fixed {
                property: Prop::T,
                value: 450.0 + 273.15,
            },
        )?;
        let returbine = make_process(
            "returbine",
            ProcessKind::Isentropic,
            InterState::Property(Prop::P),
            backend,
        )?;
        let returbine_p = make_boundary_state(
            "returbine_P",
            BoundaryStateSpec::Fixed {
                property: Prop::P,
                value: 4.0e3,
            },
        )?;
        let condenser = make_process(
            "condenser",
            ProcessKind::Isothermal,
            InterState::Saturation(Quality::SaturatedLiquid),
            backend,
        )?;

        let connects = vec![
            connect(&[
                pump.node("out").unwrap(),
                boiler.node("in").unwrap(),
                pump_p.node("node").unwrap(),
            ])?,
            connect(&[
                boiler.node("out").unwrap(),
                turbine.node("in").unwrap(),
                boiler_t.node("node").unwrap(),
            ])?,
            connect(&[
                turbine.node("out").unwrap(),
                reboiler.node("in").unwrap(),
                turbine_p.node("node").unwrap(),
            ])?,
            connect(&[
                reboiler.node("out").unwrap(),
                returbine.node("in").unwrap(),
                reboiler_t.node("node").unwrap(),
            ])?,
            connect(&[
                returbine.node("out").unwrap(),
                condenser.node("in").unwrap(),
                returbine_p.node("node").unwrap(),
            ])?,
            connect(&[condenser.node("out").unwrap(), pump.node("in").unwrap()])?,
        ];
        Ok((
            vec![
                pump,
                pump_p,
                boiler,
                boiler_t,
                turbine,
                turbine_p,
                reboiler,
                reboiler_t,
                returbine,
                returbine_p,
                condenser,
            ],
            connects,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Binding;
    use approx::assert_relative_eq;

    fn probe_node() -> NodeInstance {
        let mut c = ComponentInstance::new("X").unwrap();
        c.add_node("port", &stream_port(), &[]).unwrap();
        c.node("port").unwrap().clone()
    }

    fn bind_state(node: &NodeInstance, st: &State) -> Binding {
        Binding::new()
            .with_var(node.var_path("p"), st.p)
            .with_var(node.var_path("T"), st.t)
            .with_var(node.var_path("rho"), st.rho)
            .with_var(node.var_path("h"), st.h)
            .with_var(node.var_path("s"), st.s)
    }

    #[test]
    fn state_closure_vanishes_at_a_consistent_state() {
        let gas: Arc<dyn PropertyBackend> =
            Arc::new(IdealGas::new("gas", 287.0, 1004.5, ReferenceState::default()).unwrap());
        let node = probe_node();
        let closures = state_closure(&node, Prop::T, Prop::P, &gas).unwrap();
        assert_eq!(closures.len(), 3);

        let st = gas.closure(Prop::T, 300.0, Prop::P, 101325.0).unwrap();
        let b = bind_state(&node, &st);
        for (label, expr) in &closures {
            let r = expr.evaluate(&b).unwrap();
            let scale = 1.0 + r.abs().max(st.h.abs());
            assert!(r.abs() <= 1e-9 * scale, "{label}: residual {r}");
        }
    }

    #[test]
    fn state_closure_round_trips_entropy_pair() {
        // (T,p) -> s, then closing from (T,s) must put p back
        let gas: Arc<dyn PropertyBackend> =
            Arc::new(IdealGas::new("gas", 287.0, 1004.5, ReferenceState::default()).unwrap());
        let st = gas.closure(Prop::T, 430.0, Prop::P, 2.4e5).unwrap();
        let node = probe_node();
        let closures = state_closure(&node, Prop::T, Prop::S, &gas).unwrap();
        let b = bind_state(&node, &st);
        for (label, expr) in &closures {
            let r = expr.evaluate(&b).unwrap();
            assert!(
                r.abs() <= 1e-9 * (1.0 + st.p.abs()),
                "{label}: residual {r}"
            );
        }
    }

    #[test]
    fn degenerate_pairs_are_rejected_at_construction() {
        let gas: Arc<dyn PropertyBackend> =
            Arc::new(IdealGas::new("gas", 287.0, 1004.5, ReferenceState::default()).unwrap());
        let node = probe_node();
        assert!(matches!(
            state_closure(&node, Prop::T, Prop::T, &gas),
            Err(ThermoError::Property(PropertyError::DegeneratePair { .. }))
        ));
        assert!(matches!(
            state_closure(&node, Prop::T, Prop::H, &gas),
            Err(ThermoError::Property(PropertyError::DegeneratePair { .. }))
        ));
    }

    #[test]
    fn process_guards() {
        let water = toy_water_backend();
        // the closure state may not repeat the pinned property
        assert!(matches!(
            make_process(
                "t",
                ProcessKind::Isenthalpic,
                InterState::Property(Prop::H),
                &water
            ),
            Err(ThermoError::InterStateClash { .. })
        ));
        // a saturation closure needs a P or T anchor, not entropy
        assert!(matches!(
            make_process(
                "t",
                ProcessKind::Isentropic,
                InterState::Saturation(Quality::SaturatedLiquid),
                &water
            ),
            Err(ThermoError::SaturationAnchor { .. })
        ));
        // ideal gas has no saturation closure
        let gas: Arc<dyn PropertyBackend> = Arc::new(IdealGas::air());
        assert!(matches!(
            make_process(
                "t",
                ProcessKind::Isothermal,
                InterState::Saturation(Quality::SaturatedLiquid),
                &gas
            ),
            Err(ThermoError::Property(PropertyError::NoSaturation(_)))
        ));
    }

    #[test]
    fn process_equation_counts() {
        let water = toy_water_backend();
        let pump = make_process(
            "pump",
            ProcessKind::Isentropic,
            InterState::Property(Prop::P),
            &water,
        )
        .unwrap();
        assert_eq!(pump.equations.len(), 4); // 1 pin + 3 closure
        let condenser = make_process(
            "condenser",
            ProcessKind::Isothermal,
            InterState::Saturation(Quality::SaturatedLiquid),
            &water,
        )
        .unwrap();
        assert_eq!(condenser.equations.len(), 5); // 1 pin + 4 saturation
    }

    #[test]
    fn boundary_state_fixed_and_ramped() {
        let fixed = make_boundary_state(
            "boiler_T",
            BoundaryStateSpec::Fixed {
                property: Prop::T,
                value: 823.15,
            },
        )
        .unwrap();
        assert_eq!(fixed.equations.len(), 1);
        assert!(fixed.internals.is_empty());

        let ramped = make_boundary_state(
            "pump_P",
            BoundaryStateSpec::Ramp {
                property: Prop::P,
                initial: 18.0e6,
                rate: -1.0e5,
            },
        )
        .unwrap();
        assert_eq!(ramped.internals.len(), 1);
        assert_eq!(ramped.internals[0].ramp, Some((18.0e6, -1.0e5)));

        assert!(matches!(
            make_boundary_state(
                "bad",
                BoundaryStateSpec::Ramp {
                    property: Prop::S,
                    initial: 0.0,
                    rate: 1.0
                }
            ),
            Err(ThermoError::RampProperty(_))
        ));
    }

    #[test]
    fn inter_state_parsing() {
        assert_eq!(
            InterState::parse("P").unwrap(),
            InterState::Property(Prop::P)
        );
        assert_eq!(
            InterState::parse("Q_0").unwrap(),
            InterState::Saturation(Quality::SaturatedLiquid)
        );
        assert!(InterState::parse("X").is_err());
        assert_eq!(
            "isentropic".parse::<ProcessKind>().unwrap(),
            ProcessKind::Isentropic
        );
        assert!("adiabatic".parse::<ProcessKind>().is_err());
    }

    #[test]
    fn rankine_demo_counts() {
        let water = toy_water_backend();
        let (components, connects) = demo::reheat_rankine(&water).unwrap();
        assert_eq!(components.len(), 11);
        assert_eq!(connects.len(), 6);
        let ramps: usize = components.iter().map(|c| c.internals.len()).sum();
        assert_eq!(ramps, 1);
    }

    #[test]
    fn source_state_closes_its_node() {
        let gas: Arc<dyn PropertyBackend> = Arc::new(IdealGas::air());
        let src = make_source_state("src", Prop::T, 300.0, Prop::P, 101325.0, &gas).unwrap();
        assert_eq!(src.equations.len(), 5); // 2 pins + 3 closure

        let st = gas.closure(Prop::T, 300.0, Prop::P, 101325.0).unwrap();
        let node = src.node("node").unwrap();
        let b = bind_state(node, &st);
        for eq in &src.equations {
            let r = eq.expr.evaluate(&b).unwrap();
            assert_relative_eq!(r, 0.0, epsilon = 1e-9);
        }
    }
}
