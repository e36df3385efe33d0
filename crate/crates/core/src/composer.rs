//! Wiring component instances into a composite model and flattening it.
//!
//! A connection routes a producer port (a dynamic component's state or an
//! algebraic map's output) into a consumer port (an input or disturbance of a
//! dynamic component, or an input of an algebraic map). Consumer ports left
//! unbound become inputs/disturbances of the composite; externals let several
//! consumer ports share one composite channel or pin them to a constant.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::components::ComponentParams;
use crate::components::{
    apply_mode, build_from_spec, Component, ComponentKind, ComponentModel, ModeConfig, ValveRole, ZoneLayout,
};
use crate::dynamics::{AlgebraicLaw, BilinearTerm, Channel, ChannelSpace, ContinuousModel};
use crate::error::{check_dim, BasError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Port {
    pub component: String,
    pub channel: String,
}

impl Port {
    pub fn new(component: &str, channel: &str) -> Self {
        Port {
            component: component.to_string(),
            channel: channel.to_string(),
        }
    }
}

impl std::fmt::Display for Port {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.component, self.channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: Port,
    pub to: Port,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalKind {
    Control,
    Exogenous,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct External {
    pub name: String,
    pub kind: ExternalKind,
    pub binds: Vec<Port>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Wiring {
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub externals: Vec<External>,
}

impl Wiring {
    pub fn connect(mut self, from: Port, to: Port) -> Self {
        self.connections.push(Connection { from, to });
        self
    }

    pub fn external(mut self, name: &str, kind: ExternalKind, binds: Vec<Port>) -> Self {
        self.externals.push(External {
            name: name.to_string(),
            kind,
            binds,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedComponent {
    pub name: String,
    pub component: Component,
}

/// Serializable description of one component instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub kind: ComponentKind,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valve_role: Option<ValveRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<ZoneLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeConfig>,
}

impl ComponentSpec {
    pub fn build(&self) -> Result<NamedComponent> {
        let mut params = ComponentParams::new();
        for (k, v) in &self.params {
            params.set(k, *v);
        }
        let component = build_from_spec(
            self.kind,
            &params,
            self.valve_role.unwrap_or(ValveRole::Generic),
            &self.layout.clone().unwrap_or_else(ZoneLayout::two_zone),
        )?;
        let component = match &self.mode {
            Some(mode) => apply_mode(&component, mode)?,
            None => component,
        };
        Ok(NamedComponent {
            name: self.name.clone(),
            component,
        })
    }
}

/// Component list plus wiring, the on-disk form of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiringDocument {
    pub components: Vec<ComponentSpec>,
    pub wiring: Wiring,
}

impl WiringDocument {
    pub fn connect(&self) -> Result<CompositeModel> {
        let components = self
            .components
            .iter()
            .map(ComponentSpec::build)
            .collect::<Result<Vec<_>>>()?;
        connect(components, self.wiring.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    State(usize),
    Algebraic { component: usize, output: usize },
    Input(usize),
    Disturbance(usize),
    Constant(f64),
}

/// Validated composite. Evaluates either directly (component by component) or
/// through [`flatten`].
#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub components: Vec<NamedComponent>,
    pub wiring: Wiring,
    states: Vec<Channel>,
    inputs: Vec<Channel>,
    disturbances: Vec<Channel>,
    state_offset: Vec<usize>,
    /// Per component, per consumer channel (inputs then disturbances for dynamic
    /// components, inputs for algebraic maps).
    sources: Vec<Vec<Source>>,
}

fn consumer_channels(c: &Component) -> Vec<&Channel> {
    match &c.model {
        ComponentModel::Dynamic(m) => m.inputs.channels().iter().chain(m.disturbances.channels()).collect(),
        ComponentModel::Algebraic(m) => m.inputs.channels().iter().collect(),
    }
}

fn is_control_slot(c: &Component, slot: usize) -> bool {
    match &c.model {
        ComponentModel::Dynamic(m) => slot < m.nu(),
        ComponentModel::Algebraic(_) => false,
    }
}

pub fn connect(components: Vec<NamedComponent>, wiring: Wiring) -> Result<CompositeModel> {
    let mut index = HashMap::new();
    for (i, c) in components.iter().enumerate() {
        if index.insert(c.name.clone(), i).is_some() {
            return Err(BasError::InvalidInput(format!("duplicate component name `{}`", c.name)));
        }
    }
    let find = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| BasError::UnknownComponent(name.to_string()))
    };
    let dangling = |p: &Port| BasError::DanglingChannel {
        component: p.component.clone(),
        channel: p.channel.clone(),
    };
    let consumer_slot = |p: &Port| -> Result<(usize, usize)> {
        let ci = find(&p.component)?;
        let slot = consumer_channels(&components[ci].component)
            .iter()
            .position(|ch| ch.name == p.channel)
            .ok_or_else(|| dangling(p))?;
        Ok((ci, slot))
    };

    // states in declaration order
    let mut states = Vec::new();
    let mut state_offset = Vec::with_capacity(components.len());
    for c in &components {
        state_offset.push(states.len());
        if let ComponentModel::Dynamic(m) = &c.component.model {
            for ch in m.states.channels() {
                states.push(Channel::new(format!("{}.{}", c.name, ch.name), ch.unit));
            }
        }
    }

    let mut bound: HashMap<(usize, usize), Source> = HashMap::new();
    let mut bind = |slot: (usize, usize), src: Source, port: &Port| -> Result<()> {
        if bound.insert(slot, src).is_some() {
            return Err(BasError::MultipleProducers {
                component: port.component.clone(),
                channel: port.channel.clone(),
            });
        }
        Ok(())
    };

    for conn in &wiring.connections {
        let pi = find(&conn.from.component)?;
        let producer = &components[pi].component;
        let src = match &producer.model {
            ComponentModel::Dynamic(m) => m
                .states
                .index_of(&conn.from.channel)
                .map(|s| Source::State(state_offset[pi] + s)),
            ComponentModel::Algebraic(m) => m.outputs.index_of(&conn.from.channel).map(|o| Source::Algebraic {
                component: pi,
                output: o,
            }),
        }
        .ok_or_else(|| dangling(&conn.from))?;
        bind(consumer_slot(&conn.to)?, src, &conn.to)?;
    }

    let mut inputs = Vec::new();
    let mut disturbances = Vec::new();
    for ext in &wiring.externals {
        let unit = match ext.binds.first() {
            Some(p) => {
                let (ci, slot) = consumer_slot(p)?;
                consumer_channels(&components[ci].component)[slot].unit
            }
            None => crate::dynamics::Unit::Celsius,
        };
        let src = match ext.kind {
            ExternalKind::Control => {
                inputs.push(Channel::new(ext.name.clone(), unit));
                Source::Input(inputs.len() - 1)
            }
            ExternalKind::Exogenous => {
                disturbances.push(Channel::new(ext.name.clone(), unit));
                Source::Disturbance(disturbances.len() - 1)
            }
            ExternalKind::Fixed(v) => Source::Constant(v),
        };
        for p in &ext.binds {
            bind(consumer_slot(p)?, src, p)?;
        }
    }

    let mut sources = Vec::with_capacity(components.len());
    for (ci, c) in components.iter().enumerate() {
        let chans = consumer_channels(&c.component);
        let mut row = Vec::with_capacity(chans.len());
        for (slot, ch) in chans.iter().enumerate() {
            let src = match bound.get(&(ci, slot)) {
                Some(src) => *src,
                None => {
                    let ch = Channel::new(format!("{}.{}", c.name, ch.name), ch.unit);
                    if is_control_slot(&c.component, slot) {
                        inputs.push(ch);
                        Source::Input(inputs.len() - 1)
                    } else {
                        disturbances.push(ch);
                        Source::Disturbance(disturbances.len() - 1)
                    }
                }
            };
            row.push(src);
        }
        sources.push(row);
    }

    check_algebraic_cycles(&components, &sources)?;

    for name in inputs.iter().chain(&disturbances).map(|c| &c.name) {
        if states.iter().any(|s| &s.name == name) {
            return Err(BasError::DuplicateChannel(name.clone()));
        }
    }
    ChannelSpace::new(inputs.clone())?;
    ChannelSpace::new(disturbances.clone())?;

    Ok(CompositeModel {
        components,
        wiring,
        states,
        inputs,
        disturbances,
        state_offset,
        sources,
    })
}

fn check_algebraic_cycles(components: &[NamedComponent], sources: &[Vec<Source>]) -> Result<()> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(
        node: usize,
        components: &[NamedComponent],
        sources: &[Vec<Source>],
        color: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Result<()> {
        color[node] = 1;
        stack.push(node);
        for src in &sources[node] {
            if let Source::Algebraic { component, .. } = *src {
                match color[component] {
                    1 => {
                        let start = stack.iter().position(|&n| n == component).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            stack[start..].iter().map(|&n| components[n].name.clone()).collect();
                        cycle.push(components[component].name.clone());
                        return Err(BasError::AlgebraicCycle(cycle));
                    }
                    0 => visit(component, components, sources, color, stack)?,
                    _ => {}
                }
            }
        }
        stack.pop();
        color[node] = 2;
        Ok(())
    }

    let mut color = vec![0u8; components.len()];
    for (i, c) in components.iter().enumerate() {
        if color[i] == 0 && c.component.model.as_algebraic().is_some() {
            visit(i, components, sources, &mut color, &mut Vec::new())?;
        }
    }
    Ok(())
}

impl CompositeModel {
    pub fn nx(&self) -> usize {
        self.states.len()
    }

    pub fn nu(&self) -> usize {
        self.inputs.len()
    }

    pub fn nd(&self) -> usize {
        self.disturbances.len()
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.states.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn disturbance_names(&self) -> Vec<&str> {
        self.disturbances.iter().map(|c| c.name.as_str()).collect()
    }

    fn resolve_value(
        &self,
        src: Source,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
        cache: &mut HashMap<usize, DVector<f64>>,
    ) -> Result<f64> {
        Ok(match src {
            Source::State(i) => x[i],
            Source::Input(i) => u[i],
            Source::Disturbance(i) => d[i],
            Source::Constant(v) => v,
            Source::Algebraic { component, output } => {
                if !cache.contains_key(&component) {
                    let map = self.components[component]
                        .component
                        .model
                        .as_algebraic()
                        .expect("algebraic source");
                    let args = self.sources[component]
                        .iter()
                        .map(|s| self.resolve_value(*s, x, u, d, cache))
                        .collect::<Result<Vec<_>>>()?;
                    let out = map.eval_default(&DVector::from_vec(args))?;
                    cache.insert(component, out);
                }
                cache[&component][output]
            }
        })
    }

    /// Drift of the composite evaluated component by component.
    pub fn eval_drift(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("composite states", self.nx(), x.len())?;
        check_dim("composite inputs", self.nu(), u.len())?;
        check_dim("composite disturbances", self.nd(), d.len())?;
        let mut cache = HashMap::new();
        let mut out = DVector::zeros(self.nx());
        for (ci, c) in self.components.iter().enumerate() {
            let ComponentModel::Dynamic(m) = &c.component.model else {
                continue;
            };
            let off = self.state_offset[ci];
            let lx = x.rows(off, m.nx()).into_owned();
            let vals = self.sources[ci]
                .iter()
                .map(|s| self.resolve_value(*s, x, u, d, &mut cache))
                .collect::<Result<Vec<_>>>()?;
            let lu = DVector::from_column_slice(&vals[..m.nu()]);
            let ld = DVector::from_column_slice(&vals[m.nu()..]);
            let dx = m.eval_drift(&lx, &lu, &ld)?;
            out.rows_mut(off, m.nx()).copy_from(&dx);
        }
        Ok(out)
    }

    /// Per-state diffusion intensities in composite order.
    pub fn noise_sigma(&self) -> DVector<f64> {
        let mut sigma = DVector::zeros(self.nx());
        for (ci, c) in self.components.iter().enumerate() {
            if let ComponentModel::Dynamic(m) = &c.component.model {
                sigma.rows_mut(self.state_offset[ci], m.nx()).copy_from(&m.noise_sigma);
            }
        }
        sigma
    }
}

/// Affine expression over the composite's (states, inputs, disturbances, 1).
#[derive(Debug, Clone, PartialEq)]
struct Expr {
    s: DVector<f64>,
    i: DVector<f64>,
    d: DVector<f64>,
    c: f64,
}

impl Expr {
    fn zero(nx: usize, nu: usize, nd: usize) -> Self {
        Expr {
            s: DVector::zeros(nx),
            i: DVector::zeros(nu),
            d: DVector::zeros(nd),
            c: 0.0,
        }
    }

    fn axpy(&mut self, alpha: f64, other: &Expr) {
        if alpha != 0.0 {
            self.s.axpy(alpha, &other.s, 1.0);
            self.i.axpy(alpha, &other.i, 1.0);
            self.d.axpy(alpha, &other.d, 1.0);
            self.c += alpha * other.c;
        }
    }

    fn is_constant(&self) -> bool {
        self.s
            .iter()
            .chain(self.i.iter())
            .chain(self.d.iter())
            .all(|v| *v == 0.0)
    }
}

struct Flattener<'a> {
    model: &'a CompositeModel,
    cache: HashMap<usize, Vec<Expr>>,
}

impl Flattener<'_> {
    fn zero(&self) -> Expr {
        Expr::zero(self.model.nx(), self.model.nu(), self.model.nd())
    }

    fn expr(&mut self, src: Source) -> Result<Expr> {
        let mut e = self.zero();
        match src {
            Source::State(k) => e.s[k] = 1.0,
            Source::Input(k) => e.i[k] = 1.0,
            Source::Disturbance(k) => e.d[k] = 1.0,
            Source::Constant(v) => e.c = v,
            Source::Algebraic { component, output } => {
                if !self.cache.contains_key(&component) {
                    let outs = self.algebraic_outputs(component)?;
                    self.cache.insert(component, outs);
                }
                e = self.cache[&component][output].clone();
            }
        }
        Ok(e)
    }

    fn algebraic_outputs(&mut self, component: usize) -> Result<Vec<Expr>> {
        let named = &self.model.components[component];
        let map = named.component.model.as_algebraic().expect("algebraic");
        let args = self.model.sources[component]
            .clone()
            .into_iter()
            .map(|s| self.expr(s))
            .collect::<Result<Vec<_>>>()?;
        match &map.law {
            AlgebraicLaw::Affine(_) => {
                let v = map.variant(&map.default_mode)?;
                let mut outs = Vec::with_capacity(map.outputs.dim());
                for o in 0..map.outputs.dim() {
                    let mut e = self.zero();
                    e.c = v.offset[o];
                    for (k, arg) in args.iter().enumerate() {
                        e.axpy(v.gain[(o, k)], arg);
                    }
                    outs.push(e);
                }
                Ok(outs)
            }
            AlgebraicLaw::EqualPercentageValve { .. } => {
                if !args.iter().all(Expr::is_constant) {
                    return Err(BasError::NonAffine(format!(
                        "valve `{}` needs a fixed opening to be flattened",
                        named.name
                    )));
                }
                let values = DVector::from_iterator(args.len(), args.iter().map(|a| a.c));
                let out = map.eval_default(&values)?;
                Ok(out
                    .iter()
                    .map(|v| {
                        let mut e = self.zero();
                        e.c = *v;
                        e
                    })
                    .collect())
            }
        }
    }
}

/// Substitutes every algebraic output and wired channel, yielding one model
/// over the composite's states, inputs and disturbances.
pub fn flatten(composite: &CompositeModel) -> Result<ContinuousModel> {
    let (nx, nu, nd) = (composite.nx(), composite.nu(), composite.nd());
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, nu);
    let mut f = DMatrix::zeros(nx, nd);
    let mut q = DVector::zeros(nx);
    let mut bilinear: BTreeMap<usize, BilinearTerm> = BTreeMap::new();
    let mut fl = Flattener {
        model: composite,
        cache: HashMap::new(),
    };

    for (ci, c) in composite.components.iter().enumerate() {
        let ComponentModel::Dynamic(m) = &c.component.model else {
            continue;
        };
        let off = composite.state_offset[ci];
        let local_x: Vec<Expr> = (0..m.nx())
            .map(|k| {
                let mut e = fl.zero();
                e.s[off + k] = 1.0;
                e
            })
            .collect();
        let slots = composite.sources[ci]
            .clone()
            .into_iter()
            .map(|s| fl.expr(s))
            .collect::<Result<Vec<_>>>()?;
        let (local_u, local_d) = slots.split_at(m.nu());

        // row r of a local affine form: Σ_c Ax[r,c] x_c + Σ_j Bu[r,j] u_j + Σ_j Fd[r,j] d_j
        let form = |fl: &Flattener, r: usize, sa: &DMatrix<f64>, sb: &DMatrix<f64>, sf: &DMatrix<f64>| {
            let mut e = fl.zero();
            for (k, ex) in local_x.iter().enumerate() {
                e.axpy(sa[(r, k)], ex);
            }
            for (k, ex) in local_u.iter().enumerate() {
                e.axpy(sb[(r, k)], ex);
            }
            for (k, ex) in local_d.iter().enumerate() {
                e.axpy(sf[(r, k)], ex);
            }
            e
        };

        for r in 0..m.nx() {
            let row = off + r;
            let mut e = form(&fl, r, &m.drift_a, &m.drift_b, &m.drift_f);
            e.c += m.drift_q[r];
            for term in &m.bilinear {
                let gain = &local_u[term.input];
                let inner = form(&fl, r, &term.state_gain, &term.input_gain, &term.disturbance_gain);
                e.axpy(gain.c, &inner);
                let driving: Vec<(usize, f64)> = gain
                    .i
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(k, v)| (k, *v))
                    .collect();
                let depends_on_state = gain.s.iter().chain(gain.d.iter()).any(|v| *v != 0.0);
                if depends_on_state || driving.len() > 1 {
                    return Err(BasError::NonAffine(format!(
                        "bilinear input `{}.{}` is wired to a state or disturbance",
                        c.name,
                        m.inputs.get(term.input).map_or("?", |ch| ch.name.as_str())
                    )));
                }
                if let Some(&(k, alpha)) = driving.first() {
                    let t = bilinear.entry(k).or_insert_with(|| BilinearTerm::zeros(k, nx, nu, nd));
                    for col in 0..nx {
                        t.state_gain[(row, col)] += alpha * inner.s[col];
                    }
                    for col in 0..nu {
                        t.input_gain[(row, col)] += alpha * inner.i[col];
                    }
                    for col in 0..nd {
                        t.disturbance_gain[(row, col)] += alpha * inner.d[col];
                    }
                    b[(row, k)] += alpha * inner.c;
                }
            }
            a.row_mut(row).copy_from(&e.s.transpose());
            b.row_mut(row).iter_mut().zip(e.i.iter()).for_each(|(t, v)| *t += v);
            f.row_mut(row).copy_from(&e.d.transpose());
            q[row] = e.c;
        }
    }

    Ok(ContinuousModel {
        states: ChannelSpace::new(composite.states.clone())?,
        inputs: ChannelSpace::new(composite.inputs.clone())?,
        disturbances: ChannelSpace::new(composite.disturbances.clone())?,
        drift_a: a,
        drift_b: b,
        drift_f: f,
        drift_q: q,
        bilinear: bilinear.into_values().collect(),
        noise_sigma: composite.noise_sigma(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{instantiate_component, ComponentKind, ComponentParams, MixerMode, ModeConfig};

    fn named(name: &str, kind: ComponentKind, p: &ComponentParams) -> NamedComponent {
        NamedComponent {
            name: name.to_string(),
            component: instantiate_component(kind, p).unwrap(),
        }
    }

    fn mixer_duct(open: bool) -> CompositeModel {
        let p = ComponentParams::non_authoritative_defaults();
        let mut mixer = named("mixer", ComponentKind::Mixer, &p);
        let mode = ModeConfig {
            mixer: if open { MixerMode::Open } else { MixerMode::Closed },
            ..ModeConfig::default()
        };
        mixer.component = apply_mode(&mixer.component, &mode).unwrap();
        let duct = named("duct", ComponentKind::AhuAirDuct, &p);
        connect(
            vec![mixer, duct],
            Wiring::default().connect(Port::new("mixer", "T_d"), Port::new("duct", "T_d")),
        )
        .unwrap()
    }

    #[test]
    fn mixer_into_duct_substitutes_outside_air() {
        let comp = mixer_duct(true);
        let flat = flatten(&comp).unwrap();
        assert_eq!(flat.states.names(), vec!["duct.T_sa"]);
        assert_eq!(flat.inputs.names(), vec!["duct.m_a"]);
        // mixer open: duct drift reads T_out directly, zone temps drop out
        let t_out = flat.disturbances.index_of("mixer.T_out").unwrap();
        let t_z1 = flat.disturbances.index_of("mixer.T_z1").unwrap();
        let term = &flat.bilinear[0];
        assert!(term.disturbance_gain[(0, t_out)] > 0.0);
        assert_eq!(term.disturbance_gain[(0, t_z1)], 0.0);
    }

    #[test]
    fn composite_and_flat_drifts_agree() {
        for open in [true, false] {
            let comp = mixer_duct(open);
            let flat = flatten(&comp).unwrap();
            let x = DVector::from_vec(vec![18.5]);
            let u = DVector::from_vec(vec![12.0]);
            let d = DVector::from_fn(comp.nd(), |i, _| 15.0 + i as f64);
            let direct = comp.eval_drift(&x, &u, &d).unwrap();
            let via_flat = flat.eval_drift(&x, &u, &d).unwrap();
            assert!((direct[0] - via_flat[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn dangling_channel_is_reported() {
        let p = ComponentParams::non_authoritative_defaults();
        let err = connect(
            vec![
                named("zone", ComponentKind::Zone, &p),
                named("duct", ComponentKind::AhuAirDuct, &p),
            ],
            Wiring::default().connect(Port::new("zone", "T_zz"), Port::new("duct", "T_z")),
        )
        .unwrap_err();
        assert_eq!(
            err,
            BasError::DanglingChannel {
                component: "zone".into(),
                channel: "T_zz".into()
            }
        );
    }

    #[test]
    fn two_producers_for_one_input_rejected() {
        let p = ComponentParams::non_authoritative_defaults();
        let err = connect(
            vec![
                named("zone", ComponentKind::Zone, &p),
                named("duct", ComponentKind::AhuAirDuct, &p),
            ],
            Wiring::default()
                .connect(Port::new("zone", "T_z1"), Port::new("duct", "T_z"))
                .connect(Port::new("zone", "T_z2"), Port::new("duct", "T_z")),
        )
        .unwrap_err();
        assert!(matches!(err, BasError::MultipleProducers { .. }));
    }

    #[test]
    fn algebraic_cycle_lists_members() {
        let p = ComponentParams::non_authoritative_defaults();
        let err = connect(
            vec![
                named("m1", ComponentKind::Mixer, &p),
                named("m2", ComponentKind::Mixer, &p),
            ],
            Wiring::default()
                .connect(Port::new("m1", "T_d"), Port::new("m2", "T_out"))
                .connect(Port::new("m2", "T_d"), Port::new("m1", "T_out")),
        )
        .unwrap_err();
        match err {
            BasError::AlgebraicCycle(names) => {
                assert!(names.contains(&"m1".to_string()) && names.contains(&"m2".to_string()))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_composite_flattens_to_nothing() {
        let comp = connect(Vec::new(), Wiring::default()).unwrap();
        let flat = flatten(&comp).unwrap();
        assert_eq!(flat.nx(), 0);
        assert_eq!(flat.nu(), 0);
    }

    #[test]
    fn bilinear_input_wired_to_state_is_rejected() {
        let p = ComponentParams::non_authoritative_defaults();
        let comp = connect(
            vec![
                named("zone", ComponentKind::Zone, &p),
                named("duct", ComponentKind::AhuAirDuct, &p),
            ],
            Wiring::default().connect(Port::new("zone", "T_z1"), Port::new("duct", "m_a")),
        )
        .unwrap();
        assert!(matches!(flatten(&comp), Err(BasError::NonAffine(_))));
    }

    #[test]
    fn wiring_document_round_trips() {
        let doc = WiringDocument {
            components: vec![ComponentSpec {
                name: "boiler".into(),
                kind: ComponentKind::Boiler,
                params: [
                    ("tau_sw".to_string(), 2.0),
                    ("k_b".to_string(), 70.0),
                    ("sigma_sw".to_string(), 0.0),
                ]
                .into_iter()
                .collect(),
                valve_role: None,
                layout: None,
                mode: None,
            }],
            wiring: Wiring::default(),
        };
        let text = serde_json::to_string(&doc).unwrap();
        let back: WiringDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        let flat = flatten(&back.connect().unwrap()).unwrap();
        assert!((flat.drift_q[0] - 35.0).abs() < 1e-12);
    }
}
