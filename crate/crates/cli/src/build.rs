//! Turn a validated [`ModelDocument`] into a flattened, alias-eliminated
//! system ready for the solver.

use std::collections::HashMap;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};

use nodal_core::circuit::{make_ground, make_resistor, make_voltage_source};
use nodal_core::hydraulics::{
    make_centrifugal_pump, make_simple_pipe, make_sink_p, HydraulicConstants, LossForm, PipeParams,
    PumpParams,
};
use nodal_core::model::{alias_eliminate, connect, flatten, ComponentInstance, FlatSystem};
use nodal_core::solve::{RampSchedule, SolveOptions};
use nodal_core::thermo::{
    ideal_gas_backend, make_boundary_state, make_process, make_source_state, toy_water_backend,
    BoundaryStateSpec, InterState, Prop, PropertyBackend, ReferenceState,
};

use crate::document::{numeric_param, string_param, ComponentDecl, ModelDocument};

pub struct BuiltSystem {
    /// Flattened system before alias elimination (full variable table).
    pub full: FlatSystem,
    /// Alias-eliminated system handed to the solver.
    pub reduced: FlatSystem,
    pub solve_options: SolveOptions,
    pub schedule: Option<RampSchedule>,
    pub n_components: usize,
    pub n_connects: usize,
}

fn backend_for(doc: &ModelDocument) -> Result<Arc<dyn PropertyBackend>> {
    match doc.options.backend.as_deref().unwrap_or("toy-water") {
        "toy-water" => Ok(toy_water_backend()),
        "ideal-gas" => {
            let r = doc.options.gas_constant.unwrap_or(287.0);
            let cp = doc.options.cp.unwrap_or(1004.5);
            ideal_gas_backend("ideal-gas", r, cp, ReferenceState::default())
                .map_err(|e| anyhow!("ideal-gas backend: {e}"))
        }
        other => bail!("unknown property backend `{other}` (use `toy-water` or `ideal-gas`)"),
    }
}

fn prop_code(decl: &ComponentDecl, key: &str, value: &str) -> Result<Prop> {
    Prop::from_code(value).ok_or_else(|| {
        anyhow!(
            "component `{}`: `{key}` must be one of P, T, D, H, S",
            decl.name
        )
    })
}

fn build_component(
    decl: &ComponentDecl,
    hydraulics: &HydraulicConstants,
    backend: &Arc<dyn PropertyBackend>,
) -> Result<ComponentInstance> {
    let ctx = || format!("component `{}` ({})", decl.name, decl.kind);
    match decl.kind.as_str() {
        "pipe" => {
            let params = PipeParams {
                length: numeric_param(decl, "L")?.unwrap_or(10.0),
                diameter: numeric_param(decl, "D")?.unwrap_or(25e-3),
                friction: numeric_param(decl, "f")?.unwrap_or(0.01),
                k_inside: numeric_param(decl, "K_inside")?.unwrap_or(0.0),
            };
            let zin = numeric_param(decl, "zin")?.unwrap_or(0.0);
            let zout = numeric_param(decl, "zout")?.unwrap_or(0.0);
            make_simple_pipe(&decl.name, params, zin, zout, hydraulics).with_context(ctx)
        }
        "pump" => {
            let params = PumpParams {
                diameter: numeric_param(decl, "D")?.unwrap_or(25e-3),
                speed_rpm: numeric_param(decl, "omega")?.unwrap_or(2500.0),
                c0: numeric_param(decl, "c_0")?.unwrap_or(4.4e-4),
                c1: numeric_param(decl, "c_1")?.unwrap_or(5.622),
            };
            make_centrifugal_pump(&decl.name, params, hydraulics).with_context(ctx)
        }
        "sink" => {
            let p = numeric_param(decl, "p")?.unwrap_or(101325.0);
            make_sink_p(&decl.name, p).with_context(ctx)
        }
        "process" => {
            let kind = string_param(decl, "kind")?
                .ok_or_else(|| anyhow!("{}: missing `kind`", ctx()))?
                .parse()
                .map_err(|e| anyhow!("{}: {e}", ctx()))?;
            let inter = string_param(decl, "inter_state")?
                .ok_or_else(|| anyhow!("{}: missing `inter_state`", ctx()))?;
            let inter = InterState::parse(&inter).map_err(|e| anyhow!("{}: {e}", ctx()))?;
            make_process(&decl.name, kind, inter, backend).with_context(ctx)
        }
        "state" => {
            let code = string_param(decl, "property")?
                .ok_or_else(|| anyhow!("{}: missing `property`", ctx()))?;
            let property = prop_code(decl, "property", &code)?;
            let value = numeric_param(decl, "value")?;
            let u0 = numeric_param(decl, "u0")?;
            let rate = numeric_param(decl, "rate")?;
            let spec = match (value, u0, rate) {
                (Some(value), None, None) => BoundaryStateSpec::Fixed { property, value },
                (None, Some(initial), Some(rate)) => BoundaryStateSpec::Ramp {
                    property,
                    initial,
                    rate,
                },
                _ => bail!("{}: provide `value`, or both `u0` and `rate`", ctx()),
            };
            make_boundary_state(&decl.name, spec).with_context(ctx)
        }
        "source" => {
            let mut given: Vec<(Prop, f64)> = Vec::new();
            for prop in Prop::ALL {
                if let Some(v) = numeric_param(decl, prop.code())? {
                    given.push((prop, v));
                }
            }
            if given.len() != 2 {
                bail!(
                    "{}: a source pins exactly two properties, got {}",
                    ctx(),
                    given.len()
                );
            }
            make_source_state(
                &decl.name, given[0].0, given[0].1, given[1].0, given[1].1, backend,
            )
            .with_context(ctx)
        }
        "resistor" => {
            let r = numeric_param(decl, "r")?.ok_or_else(|| anyhow!("{}: missing `r`", ctx()))?;
            make_resistor(&decl.name, r).with_context(ctx)
        }
        "vsource" => {
            let v = numeric_param(decl, "v")?.ok_or_else(|| anyhow!("{}: missing `v`", ctx()))?;
            make_voltage_source(&decl.name, v).with_context(ctx)
        }
        "ground" => make_ground(&decl.name).with_context(ctx),
        other => bail!("unknown component type `{other}`"),
    }
}

/// Build, flatten, and alias-eliminate the declared system.
pub fn build_system(doc: &ModelDocument) -> Result<BuiltSystem> {
    let mut doc = doc.clone();

    // sweep ramp overrides rewrite the targeted state declarations
    if let Some(sweep) = &doc.sweep {
        let overrides: Vec<_> = sweep.ramps.clone();
        for ramp in overrides {
            let instance = ramp.path.split('.').next().unwrap().to_string();
            let decl = doc
                .components
                .iter_mut()
                .find(|c| c.name == instance)
                .expect("validated ramp path");
            decl.params.remove("value");
            decl.params
                .insert("u0".to_string(), toml::Value::Float(ramp.u0));
            decl.params
                .insert("rate".to_string(), toml::Value::Float(ramp.rate));
        }
    }

    let hydraulics = HydraulicConstants {
        rho: doc.options.rho.unwrap_or(1.0e3),
        loss_form: if doc.options.literal_q2 {
            LossForm::LiteralSquare
        } else {
            LossForm::SignAware
        },
        ..HydraulicConstants::default()
    };
    let backend = backend_for(&doc)?;

    let components: Vec<ComponentInstance> = doc
        .components
        .iter()
        .map(|decl| build_component(decl, &hydraulics, &backend))
        .collect::<Result<_>>()?;

    let by_name: HashMap<&str, &ComponentInstance> =
        components.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut connects = Vec::with_capacity(doc.connections.len());
    for conn in &doc.connections {
        let nodes: Vec<_> = conn
            .nodes
            .iter()
            .map(|path| {
                let (instance, port) = path.rsplit_once('.').expect("validated path");
                by_name[instance].node(port).expect("validated port")
            })
            .collect();
        connects.push(connect(&nodes)?);
    }

    let full = flatten(&components, &connects)?;
    let reduced = alias_eliminate(&full);

    let mut solve_options = SolveOptions::default();
    if let Some(tol) = doc.options.tolerance {
        solve_options.residual_tolerance = tol;
    }
    if let Some(n) = doc.options.max_iterations {
        solve_options.max_iterations = n;
    }

    let schedule = match &doc.sweep {
        None => None,
        Some(sweep) => Some(match &sweep.times {
            Some(times) => RampSchedule::new(times.clone())?,
            None => RampSchedule::uniform(
                sweep.start.expect("validated grid"),
                sweep.stop.expect("validated grid"),
                sweep.step.expect("validated grid"),
            )?,
        }),
    };

    Ok(BuiltSystem {
        n_components: components.len(),
        n_connects: connects.len(),
        full,
        reduced,
        solve_options,
        schedule,
    })
}
