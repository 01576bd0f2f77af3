//! Pluggable fluid-property backends.
//!
//! A backend closes a full thermodynamic state `(p, T, ρ, h, s)` from any
//! admissible pair of those properties, and optionally from a saturation
//! quality flag plus a pressure or temperature anchor. Backends must be
//! self-consistent: feeding any two returned properties back must reproduce
//! the other three.
//!
//! Two analytic backends are built in: a calorically perfect ideal gas and a
//! two-region toy water model (incompressible liquid + ideal-gas vapor
//! joined by a Clausius-Clapeyron saturation curve). Neither aspires to
//! reference-grade accuracy; they exist so cycle models close without an
//! external property library.

use std::fmt;
use std::sync::Arc;

/// Property identifier, following the single-letter codes of common property
/// libraries (`D` is density).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prop {
    P,
    T,
    D,
    H,
    S,
}

impl Prop {
    pub const ALL: [Prop; 5] = [Prop::P, Prop::T, Prop::D, Prop::H, Prop::S];

    pub fn code(&self) -> &'static str {
        match self {
            Prop::P => "P",
            Prop::T => "T",
            Prop::D => "D",
            Prop::H => "H",
            Prop::S => "S",
        }
    }

    /// Connector variable name used on stream ports.
    pub fn var_name(&self) -> &'static str {
        match self {
            Prop::P => "p",
            Prop::T => "T",
            Prop::D => "rho",
            Prop::H => "h",
            Prop::S => "s",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Prop::P => "Pa",
            Prop::T => "K",
            Prop::D => "kg/m3",
            Prop::H => "J/kg",
            Prop::S => "J/(kg.K)",
        }
    }

    pub fn from_code(code: &str) -> Option<Prop> {
        match code {
            "P" => Some(Prop::P),
            "T" => Some(Prop::T),
            "D" => Some(Prop::D),
            "H" => Some(Prop::H),
            "S" => Some(Prop::S),
            _ => None,
        }
    }
}

impl fmt::Display for Prop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Full state closed by a backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub p: f64,
    pub t: f64,
    pub rho: f64,
    pub h: f64,
    pub s: f64,
}

impl State {
    pub fn get(&self, prop: Prop) -> f64 {
        match prop {
            Prop::P => self.p,
            Prop::T => self.t,
            Prop::D => self.rho,
            Prop::H => self.h,
            Prop::S => self.s,
        }
    }
}

/// Saturation quality flag: `Q_0` saturated liquid, `Q_1` saturated vapor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    SaturatedLiquid,
    SaturatedVapor,
}

impl Quality {
    pub fn code(&self) -> &'static str {
        match self {
            Quality::SaturatedLiquid => "Q_0",
            Quality::SaturatedVapor => "Q_1",
        }
    }

    pub fn from_code(code: &str) -> Option<Quality> {
        match code {
            "Q_0" => Some(Quality::SaturatedLiquid),
            "Q_1" => Some(Quality::SaturatedVapor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropertyError {
    #[error("degenerate property pair ({a}, {b}): {detail}")]
    DegeneratePair { a: Prop, b: Prop, detail: String },
    #[error("state out of range: {0}")]
    OutOfRange(String),
    #[error("({a}, {b}) = ({av}, {bv}) lies inside the two-phase dome; only enthalpy or entropy paired with P or T closes there")]
    InsideDome { a: Prop, b: Prop, av: f64, bv: f64 },
    #[error("backend `{0}` has no saturation closure")]
    NoSaturation(String),
    #[error("saturation closures anchor on P or T, not {0}")]
    BadSaturationAnchor(Prop),
}

/// Closure of full states from property pairs, with an optional saturation
/// closure. Implementations are stateless and reentrant.
pub trait PropertyBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Value-independent admissibility of a property pair. Value-dependent
    /// degeneracies (e.g. region-specific ones) surface from [`closure`](Self::closure).
    fn check_pair(&self, a: Prop, b: Prop) -> Result<(), PropertyError>;

    /// Close the full state from two property values.
    fn closure(&self, a: Prop, av: f64, b: Prop, bv: f64) -> Result<State, PropertyError>;

    fn supports_saturation(&self) -> bool {
        false
    }

    /// State on the saturation boundary at the given `P` or `T` anchor.
    fn saturation(&self, _q: Quality, anchor: Prop, _value: f64) -> Result<State, PropertyError> {
        let _ = anchor;
        Err(PropertyError::NoSaturation(self.name().to_string()))
    }
}

fn same_pair(a: Prop, b: Prop) -> Result<(), PropertyError> {
    if a == b {
        return Err(PropertyError::DegeneratePair {
            a,
            b,
            detail: "a pair must name two distinct properties".to_string(),
        });
    }
    Ok(())
}

/// Finite and strictly positive (false for NaN).
fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Reference state anchoring enthalpy and entropy.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceState {
    pub t_ref: f64,
    pub p_ref: f64,
    pub h_ref: f64,
    pub s_ref: f64,
}

impl Default for ReferenceState {
    fn default() -> Self {
        ReferenceState {
            t_ref: 273.15,
            p_ref: 101325.0,
            h_ref: 0.0,
            s_ref: 0.0,
        }
    }
}

/// Calorically perfect ideal gas:
/// `ρ = p/(RT)`, `h = cp(T - T_ref) + h_ref`,
/// `s = cp·ln(T/T_ref) - R·ln(p/p_ref) + s_ref`.
///
/// Isentropes satisfy `p·ρ^(-k) = const` with `k = cp/(cp - R)`.
/// `(T, H)` is rejected as degenerate: enthalpy determines temperature.
#[derive(Debug, Clone)]
pub struct IdealGas {
    fluid: String,
    pub r: f64,
    pub cp: f64,
    pub reference: ReferenceState,
}

impl IdealGas {
    pub fn new(
        fluid: &str,
        r: f64,
        cp: f64,
        reference: ReferenceState,
    ) -> Result<IdealGas, PropertyError> {
        if !positive(r) {
            return Err(PropertyError::OutOfRange(format!(
                "gas constant must be positive, got {r}"
            )));
        }
        if !(cp > r && cp.is_finite()) {
            return Err(PropertyError::OutOfRange(format!(
                "cp must exceed the gas constant, got cp = {cp}, R = {r}"
            )));
        }
        Ok(IdealGas {
            fluid: fluid.to_string(),
            r,
            cp,
            reference,
        })
    }

    /// Air-like defaults: R = 287 J/(kg·K), cp = 1004.5 J/(kg·K).
    pub fn air() -> IdealGas {
        IdealGas::new("air", 287.0, 1004.5, ReferenceState::default()).unwrap()
    }

    /// Isentropic exponent `k = cp/cv`.
    pub fn k(&self) -> f64 {
        self.cp / (self.cp - self.r)
    }

    fn state(&self, t: f64, p: f64) -> Result<State, PropertyError> {
        if !positive(t) || !positive(p) {
            return Err(PropertyError::OutOfRange(format!(
                "ideal gas needs T > 0 and p > 0, got T = {t}, p = {p}"
            )));
        }
        let refs = &self.reference;
        Ok(State {
            p,
            t,
            rho: p / (self.r * t),
            h: self.cp * (t - refs.t_ref) + refs.h_ref,
            s: self.cp * (t / refs.t_ref).ln() - self.r * (p / refs.p_ref).ln() + refs.s_ref,
        })
    }

    fn t_from_h(&self, h: f64) -> f64 {
        self.reference.t_ref + (h - self.reference.h_ref) / self.cp
    }

    fn t_from_ps(&self, p: f64, s: f64) -> f64 {
        let refs = &self.reference;
        refs.t_ref * (((s - refs.s_ref) + self.r * (p / refs.p_ref).ln()) / self.cp).exp()
    }

    fn p_from_ts(&self, t: f64, s: f64) -> f64 {
        let refs = &self.reference;
        refs.p_ref * ((self.cp * (t / refs.t_ref).ln() + refs.s_ref - s) / self.r).exp()
    }
}

impl PropertyBackend for IdealGas {
    fn name(&self) -> &str {
        &self.fluid
    }

    fn check_pair(&self, a: Prop, b: Prop) -> Result<(), PropertyError> {
        same_pair(a, b)?;
        if matches!((a, b), (Prop::T, Prop::H) | (Prop::H, Prop::T)) {
            return Err(PropertyError::DegeneratePair {
                a,
                b,
                detail: "enthalpy of a calorically perfect gas determines temperature".to_string(),
            });
        }
        Ok(())
    }

    fn closure(&self, a: Prop, av: f64, b: Prop, bv: f64) -> Result<State, PropertyError> {
        self.check_pair(a, b)?;
        let get = |p: Prop| -> Option<f64> {
            if a == p {
                Some(av)
            } else if b == p {
                Some(bv)
            } else {
                None
            }
        };
        let (p, t, rho, h, s) = (
            get(Prop::P),
            get(Prop::T),
            get(Prop::D),
            get(Prop::H),
            get(Prop::S),
        );
        let positive = |name: &str, v: f64| -> Result<f64, PropertyError> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(PropertyError::OutOfRange(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        let (t, p) = match (p, t, rho, h, s) {
            (Some(p), Some(t), ..) => (t, p),
            (Some(p), None, Some(rho), None, None) => {
                (positive("p", p)? / (self.r * positive("rho", rho)?), p)
            }
            (Some(p), None, None, Some(h), None) => (self.t_from_h(h), p),
            (Some(p), None, None, None, Some(s)) => (self.t_from_ps(positive("p", p)?, s), p),
            (None, Some(t), Some(rho), None, None) => {
                (t, positive("rho", rho)? * self.r * positive("T", t)?)
            }
            (None, Some(t), None, None, Some(s)) => (t, self.p_from_ts(positive("T", t)?, s)),
            (None, None, Some(rho), Some(h), None) => {
                let t = self.t_from_h(h);
                (t, positive("rho", rho)? * self.r * positive("T", t)?)
            }
            (None, None, Some(rho), None, Some(s)) => {
                // (cp - R)·ln T = s - s_ref + cp·ln T_ref + R·ln(ρR/p_ref)
                let refs = &self.reference;
                let rho = positive("rho", rho)?;
                let ln_t = ((s - refs.s_ref)
                    + self.cp * refs.t_ref.ln()
                    + self.r * (rho * self.r / refs.p_ref).ln())
                    / (self.cp - self.r);
                let t = ln_t.exp();
                (t, rho * self.r * t)
            }
            (None, None, None, Some(h), Some(s)) => {
                let t = self.t_from_h(h);
                (t, self.p_from_ts(positive("T", t)?, s))
            }
            _ => unreachable!("all distinct pairs covered"),
        };
        self.state(t, p)
    }
}

/// Two-region toy water model.
///
/// Liquid: incompressible, `ρ = 1000`, `cp = 4186`,
/// `h = cp(T - T₀) + (p - p₀)/ρ`, `s = cp·ln(T/T₀)`.
/// Vapor: ideal gas, `R = 461.5`, `cp = 1900`, offset by the latent heat at
/// the anchor. The regions join along the Clausius-Clapeyron curve
/// `ln(p/p₀) = (h_fg/R)(1/T₀ - 1/T)` anchored at `(373.15 K, 101325 Pa)`
/// with constant `h_fg = 2.26e6 J/kg`.
///
/// Inside the dome, pairs of one anchor (`P` or `T`) and one energy-like
/// property (`H` or `S`) close by the lever rule on the boundary states;
/// all other in-dome queries are rejected.
#[derive(Debug, Clone, Default)]
pub struct ToyWater;

impl ToyWater {
    pub const T0: f64 = 373.15;
    pub const P0: f64 = 101325.0;
    pub const RHO_LIQ: f64 = 1000.0;
    pub const CP_LIQ: f64 = 4186.0;
    pub const R_VAP: f64 = 461.5;
    pub const CP_VAP: f64 = 1900.0;
    pub const H_FG: f64 = 2.26e6;

    /// Entropy of vaporization at the anchor point.
    fn s_fg() -> f64 {
        Self::H_FG / Self::T0
    }

    /// Clausius-Clapeyron saturation pressure.
    pub fn p_sat(t: f64) -> Result<f64, PropertyError> {
        if !positive(t) {
            return Err(PropertyError::OutOfRange(format!(
                "saturation temperature must be positive, got {t}"
            )));
        }
        Ok(Self::P0 * ((Self::H_FG / Self::R_VAP) * (1.0 / Self::T0 - 1.0 / t)).exp())
    }

    /// Inverse of the saturation curve.
    pub fn t_sat(p: f64) -> Result<f64, PropertyError> {
        if !positive(p) {
            return Err(PropertyError::OutOfRange(format!(
                "saturation pressure must be positive, got {p}"
            )));
        }
        let inv = 1.0 / Self::T0 - (Self::R_VAP / Self::H_FG) * (p / Self::P0).ln();
        if inv <= 0.0 {
            return Err(PropertyError::OutOfRange(format!(
                "pressure {p} Pa is beyond the saturation curve"
            )));
        }
        Ok(1.0 / inv)
    }

    fn h_liq(t: f64, p: f64) -> f64 {
        Self::CP_LIQ * (t - Self::T0) + (p - Self::P0) / Self::RHO_LIQ
    }

    fn s_liq(t: f64) -> f64 {
        Self::CP_LIQ * (t / Self::T0).ln()
    }

    fn h_vap(t: f64) -> f64 {
        Self::H_FG + Self::CP_VAP * (t - Self::T0)
    }

    fn s_vap(t: f64, p: f64) -> f64 {
        Self::s_fg() + Self::CP_VAP * (t / Self::T0).ln() - Self::R_VAP * (p / Self::P0).ln()
    }

    fn rho_vap(t: f64, p: f64) -> f64 {
        p / (Self::R_VAP * t)
    }

    fn liquid_state(t: f64, p: f64) -> Result<State, PropertyError> {
        if !positive(t) || !positive(p) {
            return Err(PropertyError::OutOfRange(format!(
                "liquid state needs T > 0 and p > 0, got T = {t}, p = {p}"
            )));
        }
        Ok(State {
            p,
            t,
            rho: Self::RHO_LIQ,
            h: Self::h_liq(t, p),
            s: Self::s_liq(t),
        })
    }

    fn vapor_state(t: f64, p: f64) -> Result<State, PropertyError> {
        if !positive(t) || !positive(p) {
            return Err(PropertyError::OutOfRange(format!(
                "vapor state needs T > 0 and p > 0, got T = {t}, p = {p}"
            )));
        }
        Ok(State {
            p,
            t,
            rho: Self::rho_vap(t, p),
            h: Self::h_vap(t),
            s: Self::s_vap(t, p),
        })
    }

    fn saturated_liquid(t: f64) -> Result<State, PropertyError> {
        Self::liquid_state(t, Self::p_sat(t)?)
    }

    fn saturated_vapor(t: f64) -> Result<State, PropertyError> {
        Self::vapor_state(t, Self::p_sat(t)?)
    }

    /// Lever-rule mixture at quality `x` on the isobar/isotherm `t`, `p = p_sat(t)`.
    fn dome_state(t: f64, x: f64) -> Result<State, PropertyError> {
        let f = Self::saturated_liquid(t)?;
        let g = Self::saturated_vapor(t)?;
        let v = (1.0 - x) / f.rho + x / g.rho;
        Ok(State {
            p: f.p,
            t,
            rho: 1.0 / v,
            h: f.h + x * (g.h - f.h),
            s: f.s + x * (g.s - f.s),
        })
    }

    /// Close from an anchor (`P` or `T`) plus an energy-like property.
    fn anchored_energy(
        &self,
        anchor: Prop,
        anchor_value: f64,
        energy: Prop,
        energy_value: f64,
    ) -> Result<State, PropertyError> {
        let t_sat = match anchor {
            Prop::P => Self::t_sat(anchor_value)?,
            Prop::T => anchor_value,
            _ => unreachable!(),
        };
        if !positive(t_sat) {
            return Err(PropertyError::OutOfRange(format!(
                "anchor {anchor} = {anchor_value} has no saturation state"
            )));
        }
        let f = Self::saturated_liquid(t_sat)?;
        let g = Self::saturated_vapor(t_sat)?;
        let (low, high) = match energy {
            Prop::H => (f.h, g.h),
            Prop::S => (f.s, g.s),
            _ => unreachable!(),
        };

        if (anchor, energy) == (Prop::T, Prop::H) {
            // Liquid enthalpy carries the pressure-work term (p - p0)/ρ, so at a
            // fixed temperature every h in [h_f, h_g) is shared by a compressed
            // liquid and a dome mixture. Resolve to the liquid; reject the
            // vapor side, where enthalpy is a function of temperature alone.
            let t = anchor_value;
            if energy_value >= high {
                return Err(PropertyError::DegeneratePair {
                    a: Prop::T,
                    b: Prop::H,
                    detail: "vapor enthalpy depends on temperature only; pressure is unrecoverable"
                        .to_string(),
                });
            }
            if energy_value < low {
                return Err(PropertyError::OutOfRange(format!(
                    "no state at T = {t} K with h = {energy_value} J/kg"
                )));
            }
            let p = Self::P0 + Self::RHO_LIQ * (energy_value - Self::CP_LIQ * (t - Self::T0));
            return Self::liquid_state(t, p);
        }

        if energy_value <= low {
            // compressed / saturated liquid side
            match (anchor, energy) {
                (Prop::P, Prop::H) => {
                    let p = anchor_value;
                    let t =
                        Self::T0 + (energy_value - (p - Self::P0) / Self::RHO_LIQ) / Self::CP_LIQ;
                    Self::liquid_state(t, p)
                }
                (Prop::P, Prop::S) => {
                    let t = Self::T0 * (energy_value / Self::CP_LIQ).exp();
                    Self::liquid_state(t, anchor_value)
                }
                (Prop::T, Prop::S) => Err(PropertyError::DegeneratePair {
                    a: Prop::T,
                    b: Prop::S,
                    detail: "liquid entropy depends on temperature only; pressure is unrecoverable"
                        .to_string(),
                }),
                _ => unreachable!(),
            }
        } else if energy_value >= high {
            // superheated / saturated vapor side
            match (anchor, energy) {
                (Prop::P, Prop::H) => {
                    let t = Self::T0 + (energy_value - Self::H_FG) / Self::CP_VAP;
                    Self::vapor_state(t, anchor_value)
                }
                (Prop::P, Prop::S) => {
                    let p = anchor_value;
                    let ln_t = (energy_value - Self::s_fg() + Self::R_VAP * (p / Self::P0).ln())
                        / Self::CP_VAP;
                    Self::vapor_state(Self::T0 * ln_t.exp(), p)
                }
                (Prop::T, Prop::S) => {
                    let t = anchor_value;
                    let p = Self::P0
                        * ((Self::s_fg() + Self::CP_VAP * (t / Self::T0).ln() - energy_value)
                            / Self::R_VAP)
                            .exp();
                    Self::vapor_state(t, p)
                }
                _ => unreachable!(),
            }
        } else {
            // inside the dome: lever rule
            let x = (energy_value - low) / (high - low);
            Self::dome_state(t_sat, x)
        }
    }
}

impl PropertyBackend for ToyWater {
    fn name(&self) -> &str {
        "toy-water"
    }

    fn check_pair(&self, a: Prop, b: Prop) -> Result<(), PropertyError> {
        // region-dependent degeneracies surface at closure time
        same_pair(a, b)
    }

    fn closure(&self, a: Prop, av: f64, b: Prop, bv: f64) -> Result<State, PropertyError> {
        same_pair(a, b)?;
        // canonicalize: order by the Prop enum (P, T, D, H, S)
        let ((a, av), (b, bv)) = if (a as usize) <= (b as usize) {
            ((a, av), (b, bv))
        } else {
            ((b, bv), (a, av))
        };
        match (a, b) {
            (Prop::P, Prop::T) => {
                let (p, t) = (av, bv);
                if !positive(p) || !positive(t) {
                    return Err(PropertyError::OutOfRange(format!(
                        "need p > 0 and T > 0, got p = {p}, T = {t}"
                    )));
                }
                // on the curve itself this resolves to the liquid side
                if p >= Self::p_sat(t)? {
                    Self::liquid_state(t, p)
                } else {
                    Self::vapor_state(t, p)
                }
            }
            (Prop::P, Prop::H) | (Prop::P, Prop::S) | (Prop::T, Prop::H) | (Prop::T, Prop::S) => {
                self.anchored_energy(a, av, b, bv)
            }
            (Prop::P, Prop::D) | (Prop::T, Prop::D) => {
                let rho = bv;
                if !positive(rho) {
                    return Err(PropertyError::OutOfRange(format!(
                        "density must be positive, got {rho}"
                    )));
                }
                if (rho - Self::RHO_LIQ).abs() <= 1e-6 * Self::RHO_LIQ {
                    return Err(PropertyError::DegeneratePair {
                        a,
                        b: Prop::D,
                        detail: "liquid density is constant; it cannot close the state".to_string(),
                    });
                }
                let (t, p) = match a {
                    Prop::P => (av / (Self::R_VAP * rho), av),
                    Prop::T => (av, rho * Self::R_VAP * av),
                    _ => unreachable!(),
                };
                if !positive(t) {
                    return Err(PropertyError::OutOfRange(format!(
                        "implied temperature {t} K is not positive"
                    )));
                }
                if p > Self::p_sat(t)? {
                    return Err(PropertyError::InsideDome { a, b, av, bv });
                }
                Self::vapor_state(t, p)
            }
            (Prop::D, Prop::H) | (Prop::D, Prop::S) => {
                let rho = av;
                if !positive(rho) {
                    return Err(PropertyError::OutOfRange(format!(
                        "density must be positive, got {rho}"
                    )));
                }
                if (rho - Self::RHO_LIQ).abs() <= 1e-6 * Self::RHO_LIQ {
                    return Err(PropertyError::DegeneratePair {
                        a: Prop::D,
                        b,
                        detail: "liquid density is constant; it cannot close the state".to_string(),
                    });
                }
                let t = match b {
                    Prop::H => Self::T0 + (bv - Self::H_FG) / Self::CP_VAP,
                    Prop::S => {
                        // (cp - R)·ln T = s - s_fg + cp·ln T0 + R·ln(ρR/p0)
                        let ln_t = ((bv - Self::s_fg())
                            + Self::CP_VAP * Self::T0.ln()
                            + Self::R_VAP * (rho * Self::R_VAP / Self::P0).ln())
                            / (Self::CP_VAP - Self::R_VAP);
                        ln_t.exp()
                    }
                    _ => unreachable!(),
                };
                if !positive(t) {
                    return Err(PropertyError::OutOfRange(format!(
                        "implied temperature {t} K is not positive"
                    )));
                }
                let p = rho * Self::R_VAP * t;
                if p > Self::p_sat(t)? {
                    return Err(PropertyError::InsideDome { a, b, av, bv });
                }
                Self::vapor_state(t, p)
            }
            (Prop::H, Prop::S) => {
                let (h, s) = (av, bv);
                // try the liquid branch
                let t_l = Self::T0 * (s / Self::CP_LIQ).exp();
                let p_l = Self::P0 + Self::RHO_LIQ * (h - Self::CP_LIQ * (t_l - Self::T0));
                if t_l > 0.0 && p_l > 0.0 && p_l >= Self::p_sat(t_l)? {
                    return Self::liquid_state(t_l, p_l);
                }
                // try the vapor branch
                let t_v = Self::T0 + (h - Self::H_FG) / Self::CP_VAP;
                if t_v > 0.0 {
                    let p_v = Self::P0
                        * ((Self::s_fg() + Self::CP_VAP * (t_v / Self::T0).ln() - s) / Self::R_VAP)
                            .exp();
                    if p_v > 0.0 && p_v <= Self::p_sat(t_v)? {
                        return Self::vapor_state(t_v, p_v);
                    }
                }
                Err(PropertyError::InsideDome {
                    a: Prop::H,
                    b: Prop::S,
                    av,
                    bv,
                })
            }
            _ => unreachable!("pairs are canonically ordered"),
        }
    }

    fn supports_saturation(&self) -> bool {
        true
    }

    fn saturation(&self, q: Quality, anchor: Prop, value: f64) -> Result<State, PropertyError> {
        let t = match anchor {
            Prop::T => value,
            Prop::P => Self::t_sat(value)?,
            other => return Err(PropertyError::BadSaturationAnchor(other)),
        };
        match q {
            Quality::SaturatedLiquid => Self::saturated_liquid(t),
            Quality::SaturatedVapor => Self::saturated_vapor(t),
        }
    }
}

/// Calorically perfect ideal-gas backend.
pub fn ideal_gas_backend(
    fluid: &str,
    r: f64,
    cp: f64,
    reference: ReferenceState,
) -> Result<Arc<dyn PropertyBackend>, PropertyError> {
    Ok(Arc::new(IdealGas::new(fluid, r, cp, reference)?))
}

/// Two-region toy water backend.
pub fn toy_water_backend() -> Arc<dyn PropertyBackend> {
    Arc::new(ToyWater)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ideal_gas_density_from_pressure_and_temperature() {
        let gas = IdealGas::air();
        let st = gas.closure(Prop::T, 300.0, Prop::P, 101325.0).unwrap();
        assert_relative_eq!(st.rho, 101325.0 / (287.0 * 300.0), max_relative = 1e-12);
        assert_relative_eq!(st.rho, 1.1768, max_relative = 1e-3);
    }

    #[test]
    fn ideal_gas_isentrope_doubles_pressure() {
        // T2/T1 = 2^((k-1)/k) along s = const when p doubles
        let gas = IdealGas::air();
        let s1 = gas.closure(Prop::T, 300.0, Prop::P, 101325.0).unwrap();
        let s2 = gas.closure(Prop::P, 2.0 * 101325.0, Prop::S, s1.s).unwrap();
        let k = gas.k();
        assert_relative_eq!(
            s2.t / s1.t,
            2.0f64.powf((k - 1.0) / k),
            max_relative = 1e-12
        );
        // and p·rho^(-k) is invariant
        assert_relative_eq!(
            s1.p * s1.rho.powf(-k),
            s2.p * s2.rho.powf(-k),
            max_relative = 1e-12
        );
    }

    #[test]
    fn ideal_gas_isenthalp_keeps_temperature() {
        let gas = IdealGas::air();
        let s1 = gas.closure(Prop::T, 350.0, Prop::P, 5e5).unwrap();
        let s2 = gas.closure(Prop::P, 1e5, Prop::H, s1.h).unwrap();
        assert_relative_eq!(s2.t, s1.t, max_relative = 1e-14);
    }

    #[test]
    fn ideal_gas_rejects_degenerate_pairs() {
        let gas = IdealGas::air();
        assert!(matches!(
            gas.check_pair(Prop::T, Prop::H),
            Err(PropertyError::DegeneratePair { .. })
        ));
        assert!(matches!(
            gas.check_pair(Prop::T, Prop::T),
            Err(PropertyError::DegeneratePair { .. })
        ));
        assert!(gas.check_pair(Prop::T, Prop::P).is_ok());
        assert!(gas.closure(Prop::T, -10.0, Prop::P, 1e5).is_err());
    }

    #[test]
    fn ideal_gas_round_trips_all_admissible_pairs() {
        let gas = IdealGas::air();
        let base = gas.closure(Prop::T, 412.0, Prop::P, 3.7e5).unwrap();
        for a in Prop::ALL {
            for b in Prop::ALL {
                if gas.check_pair(a, b).is_err() {
                    continue;
                }
                let st = gas.closure(a, base.get(a), b, base.get(b)).unwrap();
                for p in Prop::ALL {
                    assert_relative_eq!(
                        st.get(p),
                        base.get(p),
                        max_relative = 1e-9,
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn construction_guards() {
        assert!(IdealGas::new("g", -1.0, 1000.0, ReferenceState::default()).is_err());
        assert!(IdealGas::new("g", 500.0, 400.0, ReferenceState::default()).is_err());
    }

    #[test]
    fn saturation_curve_anchor_point() {
        assert_relative_eq!(
            ToyWater::p_sat(ToyWater::T0).unwrap(),
            ToyWater::P0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            ToyWater::t_sat(ToyWater::P0).unwrap(),
            ToyWater::T0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn saturation_curve_at_450_kelvin() {
        let expected = ToyWater::P0
            * ((ToyWater::H_FG / ToyWater::R_VAP) * (1.0 / ToyWater::T0 - 1.0 / 450.0)).exp();
        assert_relative_eq!(
            ToyWater::p_sat(450.0).unwrap(),
            expected,
            max_relative = 1e-14
        );
        // and the closed-form inverse matches a bisection of the forward curve
        let p = ToyWater::p_sat(450.0).unwrap();
        let (mut lo, mut hi) = (300.0, 600.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ToyWater::p_sat(mid).unwrap() < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(
            ToyWater::t_sat(p).unwrap(),
            0.5 * (lo + hi),
            max_relative = 1e-10
        );
    }

    #[test]
    fn saturated_liquid_at_condenser_pressure() {
        let w = ToyWater;
        let st = w
            .saturation(Quality::SaturatedLiquid, Prop::P, 4.0e3)
            .unwrap();
        let t = ToyWater::t_sat(4.0e3).unwrap();
        assert_relative_eq!(st.t, t, max_relative = 1e-12);
        assert_eq!(st.rho, ToyWater::RHO_LIQ);
        assert_relative_eq!(
            st.h,
            ToyWater::CP_LIQ * (t - ToyWater::T0) + (4.0e3 - ToyWater::P0) / ToyWater::RHO_LIQ,
            max_relative = 1e-12
        );
    }

    #[test]
    fn region_selection_by_pressure_against_saturation() {
        let w = ToyWater;
        // 300 K: p_sat ≈ 4.1 kPa; atmospheric water at 300 K is liquid
        let liq = w.closure(Prop::P, 101325.0, Prop::T, 300.0).unwrap();
        assert_eq!(liq.rho, ToyWater::RHO_LIQ);
        // low pressure, hot: vapor
        let vap = w.closure(Prop::P, 3.0e3, Prop::T, 400.0).unwrap();
        assert_relative_eq!(
            vap.rho,
            3.0e3 / (ToyWater::R_VAP * 400.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn dome_closure_by_lever_rule() {
        let w = ToyWater;
        let t = ToyWater::t_sat(4.0e3).unwrap();
        let f = w
            .saturation(Quality::SaturatedLiquid, Prop::P, 4.0e3)
            .unwrap();
        let g = w
            .saturation(Quality::SaturatedVapor, Prop::P, 4.0e3)
            .unwrap();
        let x = 0.83;
        let s_mix = f.s + x * (g.s - f.s);
        let st = w.closure(Prop::P, 4.0e3, Prop::S, s_mix).unwrap();
        assert_relative_eq!(st.t, t, max_relative = 1e-12);
        assert_relative_eq!(st.h, f.h + x * (g.h - f.h), max_relative = 1e-12);
        let v = (1.0 - x) / f.rho + x / g.rho;
        assert_relative_eq!(st.rho, 1.0 / v, max_relative = 1e-12);

        // non-energy pairs stay rejected inside the dome
        assert!(matches!(
            w.closure(Prop::P, 4.0e3, Prop::D, st.rho),
            Err(PropertyError::InsideDome { .. })
        ));
    }

    #[test]
    fn toy_water_round_trips_admissible_pairs_in_both_regions() {
        let w = ToyWater;
        let states = [
            w.closure(Prop::P, 18.0e6, Prop::T, 320.0).unwrap(), // compressed liquid
            w.closure(Prop::P, 3.0e3, Prop::T, 450.0).unwrap(),  // superheated vapor
        ];
        for base in states {
            for a in Prop::ALL {
                for b in Prop::ALL {
                    let st = match w.closure(a, base.get(a), b, base.get(b)) {
                        Ok(st) => st,
                        Err(PropertyError::DegeneratePair { .. }) => continue,
                        Err(e) => panic!("({a},{b}) failed: {e}"),
                    };
                    for p in Prop::ALL {
                        assert_relative_eq!(
                            st.get(p),
                            base.get(p),
                            max_relative = 1e-9,
                            epsilon = 1e-9
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn toy_water_liquid_ts_is_degenerate() {
        let w = ToyWater;
        let liq = w.closure(Prop::P, 2.0e6, Prop::T, 350.0).unwrap();
        assert!(matches!(
            w.closure(Prop::T, liq.t, Prop::S, liq.s),
            Err(PropertyError::DegeneratePair { .. })
        ));
    }

    #[test]
    fn ideal_gas_has_no_saturation_closure() {
        let gas = IdealGas::air();
        assert!(!gas.supports_saturation());
        assert!(matches!(
            gas.saturation(Quality::SaturatedLiquid, Prop::P, 1e5),
            Err(PropertyError::NoSaturation(_))
        ));
    }
}
