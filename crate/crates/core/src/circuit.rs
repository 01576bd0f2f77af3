//! Minimal electrical domain: pin connector, resistor, constant-voltage
//! source, and ground. Exercises the generic connection semantics on linear
//! systems (Kirchhoff's current law is the through-variable sum at each
//! connect set).

use std::sync::{Arc, OnceLock};

use crate::expr::Expr;
use crate::model::{ComponentInstance, ConnectorType, ModelError, VariableRole};

/// Electrical pin: voltage (across) and current (through, positive into the
/// component).
pub fn pin() -> Arc<ConnectorType> {
    static PIN: OnceLock<Arc<ConnectorType>> = OnceLock::new();
    PIN.get_or_init(|| {
        ConnectorType::declare(
            "Pin",
            &[
                ("v", VariableRole::Across, "V", 0.0),
                ("i", VariableRole::Through, "A", 0.0),
            ],
            &[],
        )
        .expect("static connector")
    })
    .clone()
}

/// Two-pin resistor: `p.v - n.v = R * p.i`.
pub fn make_resistor(name: &str, resistance: f64) -> Result<ComponentInstance, ModelError> {
    if !(resistance.is_finite() && resistance > 0.0) {
        return Err(ModelError::InvalidParameter {
            component: name.to_string(),
            name: "R".to_string(),
            reason: format!("must be finite and > 0, got {resistance}"),
        });
    }
    let mut c = ComponentInstance::new(name)?;
    c.add_parameter("R", resistance, "ohm")?;
    c.add_node("p", &pin(), &[])?;
    c.add_node("n", &pin(), &[])?;
    let (p, n) = (c.node("p").unwrap().clone(), c.node("n").unwrap().clone());
    c.add_equation("ohm", p.var("v") - n.var("v") - resistance * p.var("i"));
    c.add_equation("balance", p.var("i") + n.var("i"));
    Ok(c)
}

/// Ideal constant-voltage source: `p.v - n.v = V`.
pub fn make_voltage_source(name: &str, volts: f64) -> Result<ComponentInstance, ModelError> {
    let mut c = ComponentInstance::new(name)?;
    c.add_parameter("V", volts, "V")?;
    c.add_node("p", &pin(), &[])?;
    c.add_node("n", &pin(), &[])?;
    let (p, n) = (c.node("p").unwrap().clone(), c.node("n").unwrap().clone());
    c.add_equation("source", p.var("v") - n.var("v") - Expr::constant(volts));
    c.add_equation("balance", p.var("i") + n.var("i"));
    Ok(c)
}

/// Voltage datum: pins its single node to 0 V.
pub fn make_ground(name: &str) -> Result<ComponentInstance, ModelError> {
    let mut c = ComponentInstance::new(name)?;
    c.add_node("pin", &pin(), &[])?;
    let node = c.node("pin").unwrap().clone();
    c.add_equation("datum", node.var("v") - Expr::constant(0.0));
    Ok(c)
}
