//! Incompressible pipe-flow domain library.
//!
//! Components relate node mechanical energy per unit weight (head, meters):
//! pressure head `p/(ρg)`, velocity head `8q²/(π²D⁴g)` (from `v = 4q/(πD²)`),
//! and elevation `z`. Pipes dissipate head through friction and local losses;
//! the centrifugal pump adds its curve `a₀ - a₁|q|`; pressure sinks pin a
//! boundary pressure.
//!
//! Losses use the sign-aware form `q·|q|` by default so they oppose the flow
//! direction in loop networks where some branches run backwards; the literal
//! `q²` form is available behind [`LossForm::LiteralSquare`] for comparison
//! runs.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::expr::Expr;
use crate::model::{
    connect, ComponentInstance, ConnectSet, ConnectorType, ModelError, NodeInstance, VariableRole,
};

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossForm {
    /// `h = k·q·|q|`: loss opposes the flow direction (default).
    SignAware,
    /// `h = k·q²` exactly as the textbook form prints it; cannot oppose
    /// reversed flow, kept for comparison runs on all-positive networks.
    LiteralSquare,
}

/// Fluid density, gravity, and the loss form used by pipe components.
#[derive(Debug, Clone, Copy)]
pub struct HydraulicConstants {
    pub rho: f64,
    pub g: f64,
    pub loss_form: LossForm,
}

impl Default for HydraulicConstants {
    fn default() -> Self {
        HydraulicConstants {
            rho: 1.0e3,
            g: STANDARD_GRAVITY,
            loss_form: LossForm::SignAware,
        }
    }
}

/// Hydraulic connector: pressure (across, Pa), volumetric flow (through,
/// m³/s, positive into the component), elevation `z` as a fixed attribute.
///
/// The default flow guess is nonzero: `d(q|q|)/dq = 0` at `q = 0`, so a flat
/// zero start would hand the solver a singular Jacobian.
pub fn pipe_node() -> Arc<ConnectorType> {
    static PIPE_NODE: OnceLock<Arc<ConnectorType>> = OnceLock::new();
    PIPE_NODE
        .get_or_init(|| {
            ConnectorType::declare(
                "PipeNode",
                &[
                    ("p", VariableRole::Across, "Pa", 101325.0),
                    ("q", VariableRole::Through, "m3/s", 1e-3),
                ],
                &["z"],
            )
            .expect("static connector")
        })
        .clone()
}

/// Pipe geometry and loss coefficients.
#[derive(Debug, Clone, Copy)]
pub struct PipeParams {
    /// Length, m.
    pub length: f64,
    /// Diameter, m.
    pub diameter: f64,
    /// Friction factor (fixed, dimensionless).
    pub friction: f64,
    /// Local loss coefficient (dimensionless).
    pub k_inside: f64,
}

impl Default for PipeParams {
    fn default() -> Self {
        PipeParams {
            length: 10.0,
            diameter: 25e-3,
            friction: 0.01,
            k_inside: 0.0,
        }
    }
}

impl PipeParams {
    fn validate(&self, component: &str) -> Result<(), ModelError> {
        let check = |name: &str, v: f64, positive: bool| -> Result<(), ModelError> {
            let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    component: component.to_string(),
                    name: name.to_string(),
                    reason: format!(
                        "must be finite and {} 0, got {v}",
                        if positive { ">" } else { ">=" }
                    ),
                })
            }
        };
        check("L", self.length, true)?;
        check("D", self.diameter, true)?;
        check("f", self.friction, false)?;
        check("K_inside", self.k_inside, false)
    }
}

/// Centrifugal pump parameters: port diameter, rotational speed in rev/min,
/// and the two curve coefficients of the theoretical head-flow line
/// `H = c₀ω² - c₁ωQ = a₀ - a₁Q` (ω in rad/s).
#[derive(Debug, Clone, Copy)]
pub struct PumpParams {
    pub diameter: f64,
    pub speed_rpm: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Default for PumpParams {
    fn default() -> Self {
        PumpParams {
            diameter: 25e-3,
            speed_rpm: 2500.0,
            c0: 4.4e-4,
            c1: 5.622,
        }
    }
}

impl PumpParams {
    pub fn omega(&self) -> f64 {
        self.speed_rpm * 2.0 * PI / 60.0
    }

    /// Shutoff head `a₀ = c₀·ω²`, m.
    pub fn a0(&self) -> f64 {
        self.c0 * self.omega() * self.omega()
    }

    /// Curve slope `a₁ = c₁·ω`, m/(m³/s).
    pub fn a1(&self) -> f64 {
        self.c1 * self.omega()
    }

    fn validate(&self, component: &str) -> Result<(), ModelError> {
        let bad = |name: &str, v: f64, reason: &str| ModelError::InvalidParameter {
            component: component.to_string(),
            name: name.to_string(),
            reason: format!("{reason}, got {v}"),
        };
        if !(self.diameter.is_finite() && self.diameter > 0.0) {
            return Err(bad("D", self.diameter, "must be finite and > 0"));
        }
        if !(self.speed_rpm.is_finite() && self.speed_rpm > 0.0) {
            return Err(bad("omega", self.speed_rpm, "must be finite and > 0"));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(bad("c_0", self.c0, "must be finite and > 0"));
        }
        if !(self.c1.is_finite() && self.c1 >= 0.0) {
            return Err(bad("c_1", self.c1, "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `8/(π²D⁴g)`, the head coefficient shared by velocity head and losses.
fn head_coefficient(diameter: f64, g: f64) -> f64 {
    8.0 / (PI * PI * diameter.powi(4) * g)
}

fn signed_square(q: Expr, form: LossForm) -> Expr {
    match form {
        LossForm::SignAware => q.clone() * q.abs(),
        LossForm::LiteralSquare => q.sq(),
    }
}

/// Node mechanical energy per unit weight: `p/(ρg) + 8q²/(π²D⁴g) + z`, m.
pub fn node_energy(node: &NodeInstance, diameter: f64, c: &HydraulicConstants) -> Expr {
    assert!(diameter > 0.0, "diameter must be positive");
    node.var("p") / (c.rho * c.g)
        + Expr::constant(head_coefficient(diameter, c.g)) * node.var("q").sq()
        + Expr::constant(node.attribute("z"))
}

/// Head lost to wall friction along the pipe: `f·(L/D)·8·q|q|/(π²D⁴g)`, m.
pub fn friction_loss(
    node: &NodeInstance,
    friction: f64,
    length: f64,
    diameter: f64,
    c: &HydraulicConstants,
) -> Expr {
    let k = friction * (length / diameter) * head_coefficient(diameter, c.g);
    Expr::constant(k) * signed_square(node.var("q"), c.loss_form)
}

/// Head lost to fittings: `K·8·q|q|/(π²D⁴g)`, m.
pub fn local_loss(
    node: &NodeInstance,
    k_coeff: f64,
    diameter: f64,
    c: &HydraulicConstants,
) -> Expr {
    let k = k_coeff * head_coefficient(diameter, c.g);
    Expr::constant(k) * signed_square(node.var("q"), c.loss_form)
}

/// Straight pipe with fixed friction factor: energy at the inlet equals
/// energy at the outlet plus friction and local losses; flow is conserved.
pub fn make_simple_pipe(
    name: &str,
    params: PipeParams,
    z_in: f64,
    z_out: f64,
    c: &HydraulicConstants,
) -> Result<ComponentInstance, ModelError> {
    params.validate(name)?;
    let mut comp = ComponentInstance::new(name)?;
    comp.add_parameter("L", params.length, "m")?;
    comp.add_parameter("D", params.diameter, "m")?;
    comp.add_parameter("f", params.friction, "-")?;
    comp.add_parameter("K_inside", params.k_inside, "-")?;
    comp.add_node("in", &pipe_node(), &[("z", z_in)])?;
    comp.add_node("out", &pipe_node(), &[("z", z_out)])?;
    let inlet = comp.node("in").unwrap().clone();
    let outlet = comp.node("out").unwrap().clone();

    let energy = node_energy(&inlet, params.diameter, c)
        - (node_energy(&outlet, params.diameter, c)
            + friction_loss(&inlet, params.friction, params.length, params.diameter, c)
            + local_loss(&inlet, params.k_inside, params.diameter, c));
    comp.add_equation("energy", energy);
    comp.add_equation("mass", inlet.var("q") + outlet.var("q"));
    Ok(comp)
}

/// Centrifugal pump: adds `a₀ - a₁|q|` meters of head between its ports.
pub fn make_centrifugal_pump(
    name: &str,
    params: PumpParams,
    c: &HydraulicConstants,
) -> Result<ComponentInstance, ModelError> {
    params.validate(name)?;
    let mut comp = ComponentInstance::new(name)?;
    comp.add_parameter("D", params.diameter, "m")?;
    comp.add_parameter("omega", params.speed_rpm, "rev/min")?;
    comp.add_parameter("c_0", params.c0, "-")?;
    comp.add_parameter("c_1", params.c1, "-")?;
    comp.add_parameter("a_0", params.a0(), "m")?;
    comp.add_parameter("a_1", params.a1(), "m/(m3/s)")?;
    comp.add_node("in", &pipe_node(), &[("z", 0.0)])?;
    comp.add_node("out", &pipe_node(), &[("z", 0.0)])?;
    let inlet = comp.node("in").unwrap().clone();
    let outlet = comp.node("out").unwrap().clone();

    let energy = node_energy(&inlet, params.diameter, c)
        + (Expr::constant(params.a0()) - Expr::constant(params.a1()) * inlet.var("q").abs())
        - node_energy(&outlet, params.diameter, c);
    comp.add_equation("energy", energy);
    comp.add_equation("mass", inlet.var("q") + outlet.var("q"));
    Ok(comp)
}

/// Boundary pressure: pins `port.p`; the port flow is whatever the network
/// pushes through it.
pub fn make_sink_p(name: &str, pressure: f64) -> Result<ComponentInstance, ModelError> {
    if !pressure.is_finite() {
        return Err(ModelError::InvalidParameter {
            component: name.to_string(),
            name: "p".to_string(),
            reason: format!("must be finite, got {pressure}"),
        });
    }
    let mut comp = ComponentInstance::new(name)?;
    comp.add_parameter("p", pressure, "Pa")?;
    comp.add_node("port", &pipe_node(), &[("z", 0.0)])?;
    let port = comp.node("port").unwrap().clone();
    comp.add_equation("pressure", port.var("p") - Expr::constant(pressure));
    Ok(comp)
}

/// Bundled example systems.
pub mod demo {
    use super::*;

    /// Pump driving a single default pipe between two equal-pressure sinks.
    /// The solved flow is the positive root of
    /// `a₀ - a₁q = f(L/D)·8q²/(π²D⁴g)`.
    pub fn pump_single_pipe(
        c: &HydraulicConstants,
    ) -> Result<(Vec<ComponentInstance>, Vec<ConnectSet>), ModelError> {
        let a = make_sink_p("A", 101325.0)?;
        let b = make_sink_p("B", 101325.0)?;
        let pump = make_centrifugal_pump("Pump", PumpParams::default(), c)?;
        let pipe = make_simple_pipe("Pipe1", PipeParams::default(), 0.0, 0.0, c)?;
        let connects = vec![
            connect(&[a.node("port").unwrap(), pump.node("in").unwrap()])?,
            connect(&[pump.node("out").unwrap(), pipe.node("in").unwrap()])?,
            connect(&[pipe.node("out").unwrap(), b.node("port").unwrap()])?,
        ];
        Ok((vec![a, b, pump, pipe], connects))
    }

    /// Pipe lengths of the 25-pipe branched network, meters.
    pub const BRANCHED_LENGTHS: [f64; 25] = [
        2.0, 3.0, 7.0, 9.0, 5.0, 4.0, 5.0, 1.0, 10.0, 2.0, 2.0, 3.0, 12.0, 1.0, 2.0, 3.0, 6.0, 6.0,
        6.0, 1.0, 1.0, 7.0, 3.0, 3.0, 2.0,
    ];

    /// Branched loop network: one pump feeding 25 default pipes (lengths
    /// [`BRANCHED_LENGTHS`], elevations all zero) between two atmospheric
    /// sinks, with sixteen three-way junctions.
    pub fn branched_network(
        c: &HydraulicConstants,
    ) -> Result<(Vec<ComponentInstance>, Vec<ConnectSet>), ModelError> {
        let mut components = Vec::with_capacity(28);
        components.push(make_sink_p("A", 101325.0)?);
        components.push(make_sink_p("B", 101325.0)?);
        components.push(make_centrifugal_pump("Pump", PumpParams::default(), c)?);
        for (i, length) in BRANCHED_LENGTHS.iter().enumerate() {
            let params = PipeParams {
                length: *length,
                ..PipeParams::default()
            };
            components.push(make_simple_pipe(
                &format!("Pipe{}", i + 1),
                params,
                0.0,
                0.0,
                c,
            )?);
        }

        let node = |comp: &str, port: &str| -> &NodeInstance {
            components
                .iter()
                .find(|c| c.name == comp)
                .and_then(|c| c.node(port))
                .expect("demo component")
        };
        let topology: &[&[(&str, &str)]] = &[
            &[("A", "port"), ("Pump", "in")],
            &[("Pump", "out"), ("Pipe1", "in")],
            &[("Pipe1", "out"), ("Pipe2", "in"), ("Pipe5", "in")],
            &[("Pipe2", "out"), ("Pipe3", "in"), ("Pipe6", "in")],
            &[("Pipe3", "out"), ("Pipe4", "in"), ("Pipe7", "in")],
            &[("Pipe4", "out"), ("Pipe10", "out"), ("Pipe14", "in")],
            &[("Pipe5", "out"), ("Pipe11", "in"), ("Pipe12", "in")],
            &[("Pipe6", "out"), ("Pipe8", "in"), ("Pipe9", "in")],
            &[("Pipe7", "out"), ("Pipe9", "out"), ("Pipe10", "in")],
            &[("Pipe12", "out"), ("Pipe8", "out"), ("Pipe13", "in")],
            &[("Pipe13", "out"), ("Pipe14", "out"), ("Pipe15", "in")],
            &[("Pipe11", "out"), ("Pipe19", "in"), ("Pipe16", "in")],
            &[("Pipe16", "out"), ("Pipe17", "in"), ("Pipe20", "in")],
            &[("Pipe17", "out"), ("Pipe18", "in"), ("Pipe21", "in")],
            &[("Pipe18", "out"), ("Pipe15", "out"), ("Pipe22", "in")],
            &[("Pipe19", "out"), ("Pipe20", "out"), ("Pipe23", "in")],
            &[("Pipe21", "out"), ("Pipe22", "out"), ("Pipe24", "in")],
            &[("Pipe23", "out"), ("Pipe24", "out"), ("Pipe25", "in")],
            &[("B", "port"), ("Pipe25", "out")],
        ];
        let mut connects = Vec::with_capacity(topology.len());
        for set in topology {
            let nodes: Vec<&NodeInstance> = set.iter().map(|(c, p)| node(c, p)).collect();
            connects.push(connect(&nodes)?);
        }
        Ok((components, connects))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Binding;
    use crate::model::{alias_eliminate, flatten, structural_check, FlatSystem};
    use crate::solve::{newton_solve, Solution, SolveOptions};
    use approx::assert_relative_eq;

    fn eval(e: &Expr, binds: &[(&str, f64)]) -> f64 {
        let mut b = Binding::new();
        for (k, v) in binds {
            b.bind_var(*k, *v).unwrap();
        }
        e.evaluate(&b).unwrap()
    }

    fn solve_system(
        components: Vec<ComponentInstance>,
        connects: Vec<ConnectSet>,
    ) -> (FlatSystem, FlatSystem, Solution) {
        let fs = flatten(&components, &connects).unwrap();
        let reduced = alias_eliminate(&fs);
        let report = structural_check(&reduced);
        assert!(report.is_ok(), "{report}");
        let sol = newton_solve(&reduced, &Binding::new(), &SolveOptions::default()).unwrap();
        assert!(sol.converged, "residual {:e}", sol.residual_norm);
        (fs, reduced, sol)
    }

    fn probe_node() -> NodeInstance {
        let mut c = ComponentInstance::new("N").unwrap();
        c.add_node("a", &pipe_node(), &[("z", 0.0)]).unwrap();
        c.node("a").unwrap().clone()
    }

    fn probe_node_z(z: f64) -> NodeInstance {
        let mut c = ComponentInstance::new("N").unwrap();
        c.add_node("a", &pipe_node(), &[("z", z)]).unwrap();
        c.node("a").unwrap().clone()
    }

    #[test]
    fn node_energy_pressure_head_only() {
        let c = HydraulicConstants::default();
        let e = node_energy(&probe_node(), 25e-3, &c);
        let head = eval(&e, &[("N.a.p", c.rho * c.g), ("N.a.q", 0.0)]);
        assert_relative_eq!(head, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn node_energy_velocity_head_term() {
        let c = HydraulicConstants::default();
        let e = node_energy(&probe_node(), 25e-3, &c);
        let head = eval(&e, &[("N.a.p", 0.0), ("N.a.q", 1e-3)]);
        let expected = 8.0 * 1e-6 / (PI * PI * 25e-3f64.powi(4) * c.g);
        assert_relative_eq!(head, expected, max_relative = 1e-12);
        assert_relative_eq!(head, 0.21159, max_relative = 1e-4);
    }

    #[test]
    fn node_energy_with_elevation() {
        let c = HydraulicConstants::default();
        let e = node_energy(&probe_node_z(2.0), 25e-3, &c);
        let head = eval(&e, &[("N.a.p", 101325.0), ("N.a.q", 0.0)]);
        assert_relative_eq!(
            head,
            101325.0 / (1000.0 * 9.80665) + 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(head, 12.332, max_relative = 1e-4);
    }

    #[test]
    fn friction_loss_examples() {
        let c = HydraulicConstants::default();
        let node = probe_node();
        let e = friction_loss(&node, 0.01, 10.0, 25e-3, &c);
        assert_eq!(eval(&e, &[("N.a.q", 0.0)]), 0.0);
        let expected = 0.01 * (10.0 / 25e-3) * 8.0 * 1e-6 / (PI * PI * 25e-3f64.powi(4) * c.g);
        assert_relative_eq!(eval(&e, &[("N.a.q", 1e-3)]), expected, max_relative = 1e-12);
        assert_relative_eq!(eval(&e, &[("N.a.q", 1e-3)]), 0.8464, max_relative = 1e-4);
        // odd symmetry: sign flips, magnitude unchanged
        assert_relative_eq!(
            eval(&e, &[("N.a.q", -1e-3)]),
            -expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn local_loss_examples() {
        let c = HydraulicConstants::default();
        let node = probe_node();
        assert_eq!(
            eval(&local_loss(&node, 0.0, 25e-3, &c), &[("N.a.q", 1e-3)]),
            0.0
        );
        let k1 = eval(&local_loss(&node, 1.0, 25e-3, &c), &[("N.a.q", 1e-3)]);
        let k2 = eval(&local_loss(&node, 2.0, 25e-3, &c), &[("N.a.q", 1e-3)]);
        assert_relative_eq!(k1, 0.21159, max_relative = 1e-4);
        assert_relative_eq!(k2, 2.0 * k1, max_relative = 1e-12);
    }

    #[test]
    fn literal_square_form_drops_the_sign() {
        let c = HydraulicConstants {
            loss_form: LossForm::LiteralSquare,
            ..HydraulicConstants::default()
        };
        let node = probe_node();
        let e = friction_loss(&node, 0.01, 10.0, 25e-3, &c);
        let fwd = eval(&e, &[("N.a.q", 1e-3)]);
        let rev = eval(&e, &[("N.a.q", -1e-3)]);
        assert_eq!(fwd, rev);
    }

    #[test]
    fn pump_curve_coefficients() {
        let p = PumpParams::default();
        let omega = 2500.0 * 2.0 * PI / 60.0;
        assert_relative_eq!(p.a0(), 4.4e-4 * omega * omega, max_relative = 1e-12);
        assert_relative_eq!(p.a0(), 30.16, max_relative = 1e-3);
        assert_relative_eq!(p.a1(), 5.622 * omega, max_relative = 1e-12);
    }

    #[test]
    fn parameter_validation() {
        let c = HydraulicConstants::default();
        let bad_pipe = PipeParams {
            length: -1.0,
            ..PipeParams::default()
        };
        assert!(make_simple_pipe("P", bad_pipe, 0.0, 0.0, &c).is_err());
        let bad_pump = PumpParams {
            speed_rpm: 0.0,
            ..PumpParams::default()
        };
        assert!(make_centrifugal_pump("P", bad_pump, &c).is_err());
        assert!(make_sink_p("S", f64::INFINITY).is_err());
    }

    #[test]
    fn pipe_with_equal_end_conditions_carries_no_flow() {
        let c = HydraulicConstants::default();
        let a = make_sink_p("A", 101325.0).unwrap();
        let b = make_sink_p("B", 101325.0).unwrap();
        let pipe = make_simple_pipe("Pipe1", PipeParams::default(), 0.0, 0.0, &c).unwrap();
        let connects = vec![
            crate::model::connect(&[a.node("port").unwrap(), pipe.node("in").unwrap()]).unwrap(),
            crate::model::connect(&[pipe.node("out").unwrap(), b.node("port").unwrap()]).unwrap(),
        ];
        let (_, _, sol) = solve_system(vec![a, b, pipe], connects);
        // the loss residual k·q² is flat at the root: a 1e-9 residual bound
        // only pins q down to sqrt(1e-9/k) ≈ 3.5e-8
        assert!(sol.value("Pipe1.in.q").unwrap().abs() <= 1e-7);
    }

    #[test]
    fn pressure_driven_pipe_matches_algebraic_inversion() {
        // Δp/(ρg) = f(L/D)·8q²/(π²D⁴g), velocity heads cancel (same D, q)
        let c = HydraulicConstants::default();
        let p = PipeParams::default();
        let dp = 1e4;
        let a = make_sink_p("A", 101325.0 + dp).unwrap();
        let b = make_sink_p("B", 101325.0).unwrap();
        let pipe = make_simple_pipe("Pipe1", p, 0.0, 0.0, &c).unwrap();
        let connects = vec![
            crate::model::connect(&[a.node("port").unwrap(), pipe.node("in").unwrap()]).unwrap(),
            crate::model::connect(&[pipe.node("out").unwrap(), b.node("port").unwrap()]).unwrap(),
        ];
        let (_, _, sol) = solve_system(vec![a, b, pipe], connects);
        let k = p.friction * (p.length / p.diameter) * 8.0 / (PI * PI * p.diameter.powi(4) * c.g);
        let q_expected = (dp / (c.rho * c.g) / k).sqrt();
        assert_relative_eq!(
            sol.value("Pipe1.in.q").unwrap(),
            q_expected,
            max_relative = 1e-9
        );
    }

    #[test]
    fn elevation_drop_drives_reversed_flow() {
        // equal end pressures but the outlet sits 10 m below the inlet: the
        // head surplus must push flow backwards through the pipe, and the
        // sign-aware loss has to balance it at k·q|q| = -Δz
        let c = HydraulicConstants::default();
        let p = PipeParams::default();
        let a = make_sink_p("A", 101325.0).unwrap();
        let b = make_sink_p("B", 101325.0).unwrap();
        let pipe = make_simple_pipe("Pipe1", p, 0.0, 10.0, &c).unwrap();
        let connects = vec![
            crate::model::connect(&[a.node("port").unwrap(), pipe.node("in").unwrap()]).unwrap(),
            crate::model::connect(&[pipe.node("out").unwrap(), b.node("port").unwrap()]).unwrap(),
        ];
        let (_, _, sol) = solve_system(vec![a, b, pipe], connects);
        let k = p.friction * (p.length / p.diameter) * 8.0 / (PI * PI * p.diameter.powi(4) * c.g);
        let q = sol.value("Pipe1.in.q").unwrap();
        assert!(q < 0.0, "flow should run downhill, got {q}");
        assert_relative_eq!(q, -(10.0 / k).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn pipe_equations_render_deterministically() {
        let c = HydraulicConstants::default();
        let pipe = make_simple_pipe("Pipe1", PipeParams::default(), 0.0, 0.0, &c).unwrap();
        assert_eq!(
            pipe.equations[1].expr.to_string(),
            "(Pipe1.in.q + Pipe1.out.q)"
        );
        let energy = pipe.equations[0].expr.to_string();
        assert!(energy.contains("(Pipe1.in.p / 9806.65)"), "{energy}");
        assert!(energy.contains("sq(Pipe1.in.q)"), "{energy}");
        assert!(energy.contains("abs(Pipe1.in.q)"), "{energy}");
    }

    #[test]
    fn pump_and_pipe_match_the_quadratic_formula() {
        let c = HydraulicConstants::default();
        let (components, connects) = demo::pump_single_pipe(&c).unwrap();
        let (_, _, sol) = solve_system(components, connects);

        let pump = PumpParams::default();
        let pipe = PipeParams::default();
        let cf = pipe.friction * (pipe.length / pipe.diameter) * 8.0
            / (PI * PI * pipe.diameter.powi(4) * c.g);
        // a0 - a1 q = cf q², positive root
        let (a0, a1) = (pump.a0(), pump.a1());
        let q = (-a1 + (a1 * a1 + 4.0 * cf * a0).sqrt()) / (2.0 * cf);
        assert_relative_eq!(sol.value("Pump.in.q").unwrap(), q, max_relative = 1e-8);
        // shutoff bound: delivered head never exceeds a0
        let gain = a0 - a1 * sol.value("Pump.in.q").unwrap().abs();
        assert!(gain <= a0);
    }

    #[test]
    fn literal_square_agrees_on_all_positive_flow() {
        let sign_aware = HydraulicConstants::default();
        let literal = HydraulicConstants {
            loss_form: LossForm::LiteralSquare,
            ..HydraulicConstants::default()
        };
        let q = |c: &HydraulicConstants| {
            let (components, connects) = demo::pump_single_pipe(c).unwrap();
            let (_, _, sol) = solve_system(components, connects);
            sol.value("Pipe1.in.q").unwrap()
        };
        assert_relative_eq!(q(&sign_aware), q(&literal), max_relative = 1e-12);
    }

    #[test]
    fn branched_network_solves_and_balances() {
        let c = HydraulicConstants::default();
        let (components, connects) = demo::branched_network(&c).unwrap();
        assert_eq!(components.len(), 28);
        assert_eq!(connects.len(), 19);

        let (full, reduced, sol) = solve_system(components, connects);

        // (#across)·(k-1) + (#through) connection equations on top of
        // 2 sink + 26·2 component equations
        assert_eq!(full.equations.len(), 108);
        assert_eq!(full.variables.len(), 108);

        // across-equality count = Σ (k-1) = 35; eliminated ≥ that
        assert!(
            reduced.aliases.len() >= 35,
            "aliases: {}",
            reduced.aliases.len()
        );

        // mass balance at every junction
        for set in &reduced.connects {
            let total: f64 = set
                .nodes
                .iter()
                .map(|n| sol.value(&format!("{}.q", n.path)).unwrap())
                .sum();
            assert!(total.abs() <= 1e-9, "junction imbalance {total:e}");
        }

        // pump inflow equals sink-B outflow in magnitude
        let pump_q = sol.value("Pump.in.q").unwrap();
        let sink_b_q = sol.value("B.port.q").unwrap();
        assert!(pump_q > 0.0);
        assert!((pump_q.abs() - sink_b_q.abs()).abs() <= 1e-9);

        // energy decreases along every pipe that carries forward flow
        for i in 1..=25 {
            let name = format!("Pipe{i}");
            let q = sol.value(&format!("{name}.in.q")).unwrap();
            let e_in = sol.value(&format!("{name}.in.p")).unwrap() / (c.rho * c.g)
                + head_coefficient(25e-3, c.g) * q * q;
            let q_out = sol.value(&format!("{name}.out.q")).unwrap();
            let e_out = sol.value(&format!("{name}.out.p")).unwrap() / (c.rho * c.g)
                + head_coefficient(25e-3, c.g) * q_out * q_out;
            if q > 1e-12 {
                assert!(
                    e_in > e_out,
                    "{name}: energy must decrease with the flow (q={q:e})"
                );
            }
        }

        // re-expanded solution satisfies every pre-elimination equation
        let mut b = Binding::new();
        for (path, value) in &sol.assignment {
            b.set_var(path.clone(), *value);
        }
        for eq in &full.equations {
            let r = eq.expr.evaluate(&b).unwrap();
            assert!(r.abs() <= 1e-9, "{}: residual {r:e}", eq.label);
        }
    }

    #[test]
    fn parallel_identical_pipes_split_evenly() {
        let c = HydraulicConstants::default();
        let a = make_sink_p("A", 101325.0).unwrap();
        let b = make_sink_p("B", 101325.0).unwrap();
        let pump = make_centrifugal_pump("Pump", PumpParams::default(), &c).unwrap();
        let feed = make_simple_pipe("Feed", PipeParams::default(), 0.0, 0.0, &c).unwrap();
        let left = make_simple_pipe("Left", PipeParams::default(), 0.0, 0.0, &c).unwrap();
        let right = make_simple_pipe("Right", PipeParams::default(), 0.0, 0.0, &c).unwrap();
        let tail = make_simple_pipe("Tail", PipeParams::default(), 0.0, 0.0, &c).unwrap();
        let connects = vec![
            crate::model::connect(&[a.node("port").unwrap(), pump.node("in").unwrap()]).unwrap(),
            crate::model::connect(&[pump.node("out").unwrap(), feed.node("in").unwrap()]).unwrap(),
            crate::model::connect(&[
                feed.node("out").unwrap(),
                left.node("in").unwrap(),
                right.node("in").unwrap(),
            ])
            .unwrap(),
            crate::model::connect(&[
                left.node("out").unwrap(),
                right.node("out").unwrap(),
                tail.node("in").unwrap(),
            ])
            .unwrap(),
            crate::model::connect(&[tail.node("out").unwrap(), b.node("port").unwrap()]).unwrap(),
        ];
        let (_, _, sol) = solve_system(vec![a, b, pump, feed, left, right, tail], connects);
        let ql = sol.value("Left.in.q").unwrap();
        let qr = sol.value("Right.in.q").unwrap();
        assert!((ql - qr).abs() <= 1e-10, "asymmetric split: {ql} vs {qr}");
    }

    #[test]
    fn branched_network_jacobian_is_finite_at_the_default_guess() {
        let c = HydraulicConstants::default();
        let (components, connects) = demo::branched_network(&c).unwrap();
        let fs = flatten(&components, &connects).unwrap();
        let reduced = alias_eliminate(&fs);
        let evaluator = crate::solve::assemble(&reduced).unwrap();
        assert_eq!(evaluator.dimension(), reduced.variables.len());
        assert_eq!(evaluator.dimension(), 71);

        let x = nalgebra::DVector::from_iterator(
            evaluator.dimension(),
            evaluator.variables().iter().map(|v| v.guess),
        );
        let j = evaluator.jacobian(&x, &reduced.binding_at(0.0)).unwrap();
        assert!(j.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn removing_a_connect_breaks_the_structure() {
        let c = HydraulicConstants::default();
        let (components, mut connects) = demo::branched_network(&c).unwrap();
        connects.remove(7);
        let fs = flatten(&components, &connects).unwrap();
        let report = structural_check(&alias_eliminate(&fs));
        assert!(!report.is_ok());
        assert!(!report.unmatched_variables.is_empty());
    }
}
