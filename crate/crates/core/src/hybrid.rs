//! Single-zone heating automaton with fan/mixer modes: guard-triggered
//! switching, event-located integration and interval box flowpipes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{BasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "(O,-)")]
    Off,
    #[serde(rename = "(M,Op)")]
    MediumOpen,
    #[serde(rename = "(M,Cl)")]
    MediumClosed,
    #[serde(rename = "(H,Op)")]
    HighOpen,
    #[serde(rename = "(H,Cl)")]
    HighClosed,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Off,
        Mode::MediumOpen,
        Mode::MediumClosed,
        Mode::HighOpen,
        Mode::HighClosed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Off => "(O,-)",
            Mode::MediumOpen => "(M,Op)",
            Mode::MediumClosed => "(M,Cl)",
            Mode::HighOpen => "(H,Op)",
            Mode::HighClosed => "(H,Cl)",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        let s = s.replace('\u{2212}', "-");
        Mode::ALL.into_iter().find(|m| m.label() == s)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// ẋ = A x + c over x = (T_z1, T_sa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub a: [[f64; 2]; 2],
    pub c: [f64; 2],
}

impl AffineField {
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.c[0],
            self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.c[1],
        ]
    }

    fn rk4(&self, x: [f64; 2], h: f64) -> [f64; 2] {
        let add = |x: [f64; 2], k: [f64; 2], s: f64| [x[0] + s * k[0], x[1] + s * k[1]];
        let k1 = self.eval(x);
        let k2 = self.eval(add(x, k1, h / 2.0));
        let k3 = self.eval(add(x, k2, h / 2.0));
        let k4 = self.eval(add(x, k3, h));
        [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardOp {
    /// enabled when T_z1 ≤ threshold
    AtMost,
    /// enabled when T_z1 ≥ threshold
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub op: GuardOp,
    pub threshold: f64,
}

impl Guard {
    pub fn enabled(&self, x: [f64; 2]) -> bool {
        match self.op {
            GuardOp::AtMost => x[0] <= self.threshold,
            GuardOp::AtLeast => x[0] >= self.threshold,
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            GuardOp::AtMost => "<=",
            GuardOp::AtLeast => ">=",
        };
        write!(f, "T_z1 {op} {}", self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub source: Mode,
    pub target: Mode,
    pub guard: Guard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridParams {
    pub t_sp: f64,
    pub delta: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
    pub t_out: f64,
    pub t_w_ss: f64,
    pub m_a_med: f64,
    pub m_a_high: f64,
    pub co2_ss: f64,
    /// Adds guards visiting the closed-mixer modes.
    #[serde(default)]
    pub recirculation: bool,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            t_sp: 20.0,
            delta: 1.0,
            delta2: 2.0,
            delta3: 3.0,
            delta4: 4.0,
            delta5: 5.0,
            t_out: 25.0,
            t_w_ss: 18.0,
            m_a_med: 10.0,
            m_a_high: 15.0,
            co2_ss: 500.0,
            recirculation: false,
        }
    }
}

pub const STATE_NAMES: [&str; 2] = ["T_z1", "T_sa"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridAutomaton {
    pub params: HybridParams,
    pub fields: Vec<(Mode, AffineField)>,
    pub transitions: Vec<Transition>,
    pub initial_mode: Mode,
    /// Per-state closed bounds.
    pub bounds: [[f64; 2]; 2],
}

fn field(a: [[f64; 2]; 2], c: [f64; 2]) -> AffineField {
    AffineField { a, c }
}

pub fn printed_fields() -> Vec<(Mode, AffineField)> {
    vec![
        (Mode::Off, field([[-0.0116, 0.0], [0.0183, -0.0183]], [0.2565, 0.0])),
        (
            Mode::MediumOpen,
            field([[-0.0292, 0.0176], [0.0183, -0.0185]], [0.2565, 0.005]),
        ),
        (
            Mode::MediumClosed,
            field([[-0.0292, 0.0176], [0.0183, -0.0183]], [0.2565, 0.0]),
        ),
        (
            Mode::HighOpen,
            field([[-0.038, 0.0264], [0.0183, -0.0186]], [0.2565, 0.0076]),
        ),
        (
            Mode::HighClosed,
            field([[-0.038, 0.0264], [0.0186, -0.0186]], [0.2565, 0.0]),
        ),
    ]
}

pub fn build_hybrid_cs3(params: &HybridParams) -> Result<HybridAutomaton> {
    let p = params;
    let ladder = [p.delta, p.delta2, p.delta3, p.delta4, p.delta5];
    if !ladder.windows(2).all(|w| w[0] < w[1]) || !(p.delta > 0.0) {
        return Err(BasError::InvalidParameter {
            name: "delta ladder".into(),
            requirement: "strictly increasing and positive",
            value: p.delta,
        });
    }
    let t = |source, target, op, threshold| Transition {
        source,
        target,
        guard: Guard { op, threshold },
    };
    let mut transitions = vec![
        t(Mode::Off, Mode::HighOpen, GuardOp::AtMost, p.t_sp - p.delta4),
        t(Mode::HighOpen, Mode::MediumOpen, GuardOp::AtLeast, p.t_sp - p.delta3),
    ];
    if p.recirculation {
        transitions.extend([
            t(Mode::HighOpen, Mode::HighClosed, GuardOp::AtMost, p.t_sp - p.delta5),
            t(Mode::HighClosed, Mode::HighOpen, GuardOp::AtLeast, p.t_sp - p.delta4),
            t(
                Mode::MediumOpen,
                Mode::MediumClosed,
                GuardOp::AtLeast,
                p.t_sp - p.delta2,
            ),
            t(Mode::MediumClosed, Mode::Off, GuardOp::AtLeast, p.t_sp - p.delta),
        ]);
    } else {
        transitions.push(t(Mode::MediumOpen, Mode::Off, GuardOp::AtLeast, p.t_sp - p.delta));
    }
    Ok(HybridAutomaton {
        params: *p,
        fields: printed_fields(),
        transitions,
        initial_mode: Mode::Off,
        bounds: [[10.0, 30.0], [15.0, 30.0]],
    })
}

impl HybridAutomaton {
    pub fn field(&self, mode: Mode) -> &AffineField {
        &self
            .fields
            .iter()
            .find(|(m, _)| *m == mode)
            .expect("every mode has a field")
            .1
    }

    pub fn outgoing(&self, mode: Mode) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.source == mode)
    }

    fn enabled(&self, mode: Mode, x: [f64; 2]) -> Result<Option<&Transition>> {
        let mut on = self.outgoing(mode).filter(|t| t.guard.enabled(x));
        let first = on.next();
        if let Some(second) = on.next() {
            return Err(BasError::NondeterministicGuards(format!(
                "in {mode} at T_z1 = {}: `{}` and `{}`",
                x[0],
                first.unwrap().guard,
                second.guard
            )));
        }
        Ok(first)
    }

    fn in_bounds(&self, x: [f64; 2]) -> bool {
        (0..2).all(|i| x[i] >= self.bounds[i][0] && x[i] <= self.bounds[i][1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridSample {
    pub t: f64,
    pub mode: Mode,
    pub x: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridEvent {
    pub t: f64,
    pub source: Mode,
    pub target: Mode,
    pub guard: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridTrace {
    pub samples: Vec<HybridSample>,
    pub events: Vec<HybridEvent>,
    pub warnings: Vec<String>,
}

impl HybridTrace {
    pub fn mode_sequence(&self) -> Vec<Mode> {
        let mut seq = Vec::new();
        if let Some(s) = self.samples.first() {
            seq.push(s.mode);
        }
        for e in &self.events {
            seq.push(e.target);
        }
        seq
    }

    /// Mode active at time t (the latest sample at or before t).
    pub fn state_at(&self, t: f64) -> Option<&HybridSample> {
        let k = self.samples.partition_point(|s| s.t <= t);
        self.samples.get(k.checked_sub(1)?)
    }
}

pub const EVENT_TOLERANCE: f64 = 1e-6;

/// Fires transitions enabled at `x`, possibly several in a row.
fn settle(ha: &HybridAutomaton, t: f64, mut mode: Mode, x: [f64; 2], trace: &mut HybridTrace) -> Result<Mode> {
    for _ in 0..=Mode::ALL.len() {
        match ha.enabled(mode, x)? {
            Some(tr) => {
                trace.events.push(HybridEvent {
                    t,
                    source: mode,
                    target: tr.target,
                    guard: tr.guard.to_string(),
                });
                mode = tr.target;
                trace.samples.push(HybridSample { t, mode, x });
            }
            None => return Ok(mode),
        }
    }
    Err(BasError::NondeterministicGuards(format!(
        "transition loop at t = {t}, T_z1 = {}",
        x[0]
    )))
}

pub fn integrate(ha: &HybridAutomaton, x0: [f64; 2], q0: Mode, horizon_minutes: f64, step: f64) -> Result<HybridTrace> {
    if !(step > 0.0) {
        return Err(BasError::InvalidParameter {
            name: "step".into(),
            requirement: "positive",
            value: step,
        });
    }
    if !(horizon_minutes >= 0.0) {
        return Err(BasError::InvalidParameter {
            name: "horizon".into(),
            requirement: "non-negative",
            value: horizon_minutes,
        });
    }
    if !ha.in_bounds(x0) {
        return Err(BasError::InvalidInput(format!(
            "initial state ({}, {}) outside the state bounds",
            x0[0], x0[1]
        )));
    }
    let mut trace = HybridTrace::default();
    let mut t = 0.0;
    let mut x = x0;
    trace.samples.push(HybridSample { t, mode: q0, x });
    if horizon_minutes == 0.0 {
        return Ok(trace);
    }
    let mut mode = settle(ha, t, q0, x, &mut trace)?;

    while t < horizon_minutes - 1e-12 {
        let h = step.min(horizon_minutes - t);
        let f = *ha.field(mode);
        let next = f.rk4(x, h);
        let fires = ha.outgoing(mode).any(|tr| tr.guard.enabled(next));
        let (dt, xn) = if fires {
            // smallest sub-step at which a guard is enabled
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > EVENT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if ha.outgoing(mode).any(|tr| tr.guard.enabled(f.rk4(x, mid))) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (hi, f.rk4(x, hi))
        } else {
            (h, next)
        };
        t += dt;
        x = xn;
        if !ha.in_bounds(x) {
            trace.warnings.push(format!(
                "state ({}, {}) left the bounds at t = {t}; clamped",
                x[0], x[1]
            ));
            for i in 0..2 {
                x[i] = x[i].clamp(ha.bounds[i][0], ha.bounds[i][1]);
            }
        }
        trace.samples.push(HybridSample { t, mode, x });
        if fires {
            mode = settle(ha, t, mode, x, &mut trace)?;
        }
    }
    Ok(trace)
}

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    fn scale(self, s: f64) -> Interval {
        if s >= 0.0 {
            Interval::new(s * self.lo, s * self.hi)
        } else {
            Interval::new(s * self.hi, s * self.lo)
        }
    }

    /// [0, h] · self
    fn sweep(self, h: f64) -> Interval {
        Interval::new(self.lo.min(0.0) * h, self.hi.max(0.0) * h)
    }

    fn hull(self, o: Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    fn contains(self, o: Interval) -> bool {
        self.lo <= o.lo && o.hi <= self.hi
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }
}

pub type Box2 = [Interval; 2];

fn box_contains(b: &Box2, x: [f64; 2], tol: f64) -> bool {
    (0..2).all(|i| x[i] >= b[i].lo - tol && x[i] <= b[i].hi + tol)
}

fn affine_image(m: [[f64; 2]; 2], shift: [Interval; 2], x: &Box2) -> Box2 {
    std::array::from_fn(|i| x[0].scale(m[i][0]).add(x[1].scale(m[i][1])).add(shift[i]))
}

fn field_image(f: &AffineField, x: &Box2) -> Box2 {
    affine_image(f.a, [Interval::point(f.c[0]), Interval::point(f.c[1])], x)
}

/// E with X + [0,h]·f(E) ⊆ E.
fn picard_enclosure(f: &AffineField, x: &Box2, h: f64) -> Result<Box2> {
    let grow = |e: &Box2| -> Box2 {
        let fe = field_image(f, e);
        [x[0].add(fe[0].sweep(h)), x[1].add(fe[1].sweep(h))]
    };
    let mut e = grow(x);
    for _ in 0..60 {
        let candidate: Box2 = std::array::from_fn(|i| {
            let r = 0.1 * e[i].width() + 1e-9;
            Interval::new(e[i].lo - r, e[i].hi + r)
        });
        let next = grow(&candidate);
        if candidate[0].contains(next[0]) && candidate[1].contains(next[1]) {
            // next ⊆ candidate, so next is an enclosure as well
            return Ok(next);
        }
        e = [next[0].hull(x[0]), next[1].hull(x[1])];
    }
    Err(BasError::InvalidInput(format!(
        "no enclosure found for step {h}; reduce the step"
    )))
}

/// Box reached after exactly h in mode f, given the enclosure E over [0,h].
fn end_box(f: &AffineField, x: &Box2, e: &Box2, h: f64) -> Box2 {
    let m = [
        [1.0 + h * f.a[0][0], h * f.a[0][1]],
        [h * f.a[1][0], 1.0 + h * f.a[1][1]],
    ];
    let fe = field_image(f, e);
    // second-order remainder (h²/2)·A·f(E)
    let rem: Box2 = std::array::from_fn(|i| fe[0].scale(f.a[i][0]).add(fe[1].scale(f.a[i][1])).scale(0.5 * h * h));
    let shift = [
        Interval::point(h * f.c[0]).add(rem[0]),
        Interval::point(h * f.c[1]).add(rem[1]),
    ];
    affine_image(m, shift, x)
}

fn intersect_guard(b: &Box2, g: &Guard) -> Option<Box2> {
    let mut out = *b;
    match g.op {
        GuardOp::AtMost => out[0].hi = out[0].hi.min(g.threshold),
        GuardOp::AtLeast => out[0].lo = out[0].lo.max(g.threshold),
    }
    (out[0].lo <= out[0].hi).then_some(out)
}

/// Part of `b` where `g` is not enabled (closure).
fn outside_guard(b: &Box2, g: &Guard) -> Option<Box2> {
    let mut out = *b;
    match g.op {
        GuardOp::AtMost => out[0].lo = out[0].lo.max(g.threshold),
        GuardOp::AtLeast => out[0].hi = out[0].hi.min(g.threshold),
    }
    (out[0].lo <= out[0].hi).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowpipeSegment {
    pub t_lo: f64,
    pub t_hi: f64,
    pub mode: Mode,
    pub bounds: Box2,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Flowpipe {
    pub segments: Vec<FlowpipeSegment>,
    pub warnings: Vec<String>,
}

impl Flowpipe {
    /// True if some segment covering time t contains x (mode-agnostic).
    pub fn contains(&self, t: f64, x: [f64; 2], tol: f64) -> bool {
        self.segments
            .iter()
            .any(|s| s.t_lo - tol <= t && t <= s.t_hi + tol && box_contains(&s.bounds, x, tol))
    }

    pub fn modes_visited(&self) -> Vec<Mode> {
        let mut seen = Vec::new();
        for s in &self.segments {
            if !seen.contains(&s.mode) {
                seen.push(s.mode);
            }
        }
        seen
    }
}

struct Pipe<'a> {
    ha: &'a HybridAutomaton,
    out: Flowpipe,
}

impl Pipe<'_> {
    fn clamp(&mut self, t: f64, b: Box2) -> Option<Box2> {
        let mut c = b;
        let mut clipped = false;
        for (i, iv) in c.iter_mut().enumerate() {
            let [lo, hi] = self.ha.bounds[i];
            if iv.lo < lo || iv.hi > hi {
                clipped = true;
                iv.lo = iv.lo.max(lo);
                iv.hi = iv.hi.min(hi);
            }
        }
        if clipped {
            self.out
                .warnings
                .push(format!("box truncated to the state bounds at t = {t}"));
        }
        (c[0].lo <= c[0].hi && c[1].lo <= c[1].hi).then_some(c)
    }

    /// Splits `b` at time t into guard-free pieces per mode (no time elapses).
    fn settle(&self, mode: Mode, b: Box2, depth: usize, acc: &mut Vec<(Mode, Box2)>) -> Result<()> {
        if depth > Mode::ALL.len() {
            return Err(BasError::NondeterministicGuards("transition loop in flowpipe".into()));
        }
        let mut stay = Some(b);
        for tr in self.ha.outgoing(mode) {
            if let Some(j) = intersect_guard(&b, &tr.guard) {
                self.settle(tr.target, j, depth + 1, acc)?;
            }
            stay = stay.and_then(|s| outside_guard(&s, &tr.guard));
        }
        if let Some(s) = stay {
            acc.push((mode, s));
        }
        Ok(())
    }

    /// Advances one branch over [t, t+h]; returns end boxes per mode.
    fn advance(
        &mut self,
        t: f64,
        h: f64,
        mode: Mode,
        x: Box2,
        full_step: bool,
        depth: usize,
        ends: &mut Vec<(Mode, Box2)>,
    ) -> Result<()> {
        if depth > Mode::ALL.len() {
            return Err(BasError::NondeterministicGuards("transition loop in flowpipe".into()));
        }
        let f = *self.ha.field(mode);
        let e = picard_enclosure(&f, &x, h)?;
        let Some(e) = self.clamp(t + h, e) else {
            return Ok(());
        };
        self.out.segments.push(FlowpipeSegment {
            t_lo: t,
            t_hi: t + h,
            mode,
            bounds: e,
        });
        // after a jump the time left in the step is anywhere in [0, h]
        let mut stay = Some(if full_step { end_box(&f, &x, &e, h) } else { e });
        for tr in self.ha.outgoing(mode) {
            if let Some(j) = intersect_guard(&e, &tr.guard) {
                // the jump happens somewhere in the step; cover the rest of it
                self.advance(t, h, tr.target, j, false, depth + 1, ends)?;
            }
            stay = stay.and_then(|s| outside_guard(&s, &tr.guard));
        }
        if let Some(s) = stay.and_then(|s| self.clamp(t + h, s)) {
            ends.push((mode, s));
        }
        Ok(())
    }
}

fn hull_by_mode(items: Vec<(Mode, Box2)>) -> Vec<(Mode, Box2)> {
    let mut out: Vec<(Mode, Box2)> = Vec::new();
    for (m, b) in items {
        match out.iter_mut().find(|(om, _)| *om == m) {
            Some((_, ob)) => *ob = [ob[0].hull(b[0]), ob[1].hull(b[1])],
            None => out.push((m, b)),
        }
    }
    out.sort_by_key(|(m, _)| *m);
    out
}

pub fn box_flowpipe(ha: &HybridAutomaton, x0: Box2, q0: Mode, horizon_minutes: f64, step: f64) -> Result<Flowpipe> {
    if !(step > 0.0) {
        return Err(BasError::InvalidParameter {
            name: "step".into(),
            requirement: "positive",
            value: step,
        });
    }
    if x0.iter().any(|iv| !(iv.lo <= iv.hi)) {
        return Err(BasError::InvalidInput("empty initial box".into()));
    }
    let bounds: Box2 = ha.bounds.map(|[lo, hi]| Interval::new(lo, hi));
    if !(bounds[0].contains(x0[0]) && bounds[1].contains(x0[1])) {
        return Err(BasError::InvalidInput("initial box outside the state bounds".into()));
    }
    let mut pipe = Pipe {
        ha,
        out: Flowpipe::default(),
    };
    let mut current = Vec::new();
    pipe.settle(q0, x0, 0, &mut current)?;
    for (m, b) in &current {
        pipe.out.segments.push(FlowpipeSegment {
            t_lo: 0.0,
            t_hi: 0.0,
            mode: *m,
            bounds: *b,
        });
    }
    let steps = (horizon_minutes / step).ceil() as usize;
    for k in 0..steps {
        let t = k as f64 * step;
        let h = step.min(horizon_minutes - t);
        if h <= 0.0 {
            break;
        }
        let mut ends = Vec::new();
        for (m, b) in current {
            pipe.advance(t, h, m, b, true, 0, &mut ends)?;
        }
        current = hull_by_mode(ends);
    }
    Ok(pipe.out)
}

pub fn flowpipe_csv(fp: &Flowpipe) -> Result<String> {
    use crate::io::fmt17;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_lo", "t_hi", "mode", "Tz_lo", "Tz_hi", "Tsa_lo", "Tsa_hi"])?;
    for seg in &fp.segments {
        w.write_record([
            fmt17(seg.t_lo),
            fmt17(seg.t_hi),
            seg.mode.to_string(),
            fmt17(seg.bounds[0].lo),
            fmt17(seg.bounds[0].hi),
            fmt17(seg.bounds[1].lo),
            fmt17(seg.bounds[1].hi),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| BasError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_flowpipe_csv(text: &str) -> Result<Vec<FlowpipeSegment>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| BasError::TraceFormat {
                    line,
                    message: format!("bad field {i}"),
                })
        };
        let mode = rec.get(2).and_then(Mode::parse).ok_or_else(|| BasError::TraceFormat {
            line,
            message: "unknown mode".into(),
        })?;
        out.push(FlowpipeSegment {
            t_lo: num(0)?,
            t_hi: num(1)?,
            mode,
            bounds: [Interval::new(num(3)?, num(4)?), Interval::new(num(5)?, num(6)?)],
        });
    }
    Ok(out)
}

/// One row per sample, every `stride`-th sample plus the last.
pub fn trace_csv(trace: &HybridTrace, stride: usize) -> Result<String> {
    use crate::io::fmt17;
    let stride = stride.max(1);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_min", "mode", "T_z1", "T_sa"])?;
    let last = trace.samples.len().saturating_sub(1);
    for (i, s) in trace.samples.iter().enumerate() {
        if i % stride == 0 || i == last {
            w.write_record([fmt17(s.t), s.mode.to_string(), fmt17(s.x[0]), fmt17(s.x[1])])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| BasError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<HybridSample>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let bad = |message: &str| BasError::TraceFormat {
            line,
            message: message.into(),
        };
        let num =
            |i: usize| -> Result<f64> { rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad number")) };
        let mode = rec.get(1).and_then(Mode::parse).ok_or_else(|| bad("unknown mode"))?;
        out.push(HybridSample {
            t: num(0)?,
            mode,
            x: [num(2)?, num(3)?],
        });
    }
    Ok(out)
}

/// Closed-form T_z1(t) in (O,−), where T_z1 decouples from T_sa.
pub fn off_mode_closed_form(ha: &HybridAutomaton, t_z0: f64, t: f64) -> f64 {
    let f = ha.field(Mode::Off);
    let a = f.a[0][0];
    let eq = -f.c[0] / a;
    eq + (t_z0 - eq) * (a * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ha() -> HybridAutomaton {
        build_hybrid_cs3(&HybridParams::default()).unwrap()
    }

    #[test]
    fn off_field_and_equilibrium() {
        let h = ha();
        let d = h.field(Mode::Off).eval([20.0, 20.0]);
        assert!((d[0] - 0.0245).abs() < 1e-12);
        assert!((0.2565f64 / 0.0116 - 22.112).abs() < 1e-3);
        assert_eq!(h.field(Mode::HighClosed).c[1], 0.0);
    }

    #[test]
    fn unordered_ladder_rejected() {
        let p = HybridParams {
            delta3: 1.5,
            delta2: 2.0,
            ..HybridParams::default()
        };
        assert!(build_hybrid_cs3(&p).is_err());
    }

    #[test]
    fn zero_horizon_is_single_sample() {
        let tr = integrate(&ha(), [15.0, 15.0], Mode::Off, 0.0, 0.01).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert!(tr.events.is_empty());
    }

    #[test]
    fn cold_start_climbs_the_ladder() {
        let h = ha();
        let tr = integrate(&h, [15.0, 15.0], Mode::Off, 150.0, 0.01).unwrap();
        assert_eq!(
            tr.mode_sequence(),
            vec![Mode::Off, Mode::HighOpen, Mode::MediumOpen, Mode::Off]
        );
        let times: Vec<f64> = tr.events.iter().map(|e| e.t).collect();
        assert_eq!(times[0], 0.0);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        // (M,Op) is entered near 43 min and left near 127 min
        assert!(
            (times[1] - 43.2).abs() < 0.1 && (times[2] - 127.2).abs() < 0.1,
            "{times:?}"
        );
    }

    #[test]
    fn jumps_keep_the_state_continuous() {
        let tr = integrate(&ha(), [15.0, 15.0], Mode::Off, 150.0, 0.01).unwrap();
        for e in &tr.events {
            let at: Vec<_> = tr.samples.iter().filter(|s| s.t == e.t).collect();
            assert!(at.len() >= 2);
            assert!(at.windows(2).all(|w| w[0].x == w[1].x));
        }
    }

    #[test]
    fn warm_start_stays_off() {
        let h = ha();
        let tr = integrate(&h, [20.0, 20.0], Mode::Off, 120.0, 0.01).unwrap();
        assert_eq!(tr.mode_sequence(), vec![Mode::Off]);
        let last = tr.samples.last().unwrap();
        assert!((last.x[0] - off_mode_closed_form(&h, 20.0, 120.0)).abs() < 1e-6);
        assert!(tr.samples.iter().all(|s| (19.0..=22.2).contains(&s.x[0])));
    }

    #[test]
    fn recirculation_flag_visits_closed_modes() {
        let h = build_hybrid_cs3(&HybridParams {
            recirculation: true,
            ..HybridParams::default()
        })
        .unwrap();
        let tr = integrate(&h, [15.0, 15.0], Mode::Off, 240.0, 0.01).unwrap();
        let seq = tr.mode_sequence();
        assert!(seq.contains(&Mode::HighClosed) && seq.contains(&Mode::MediumClosed));
    }

    #[test]
    fn singleton_flowpipe_tracks_trajectory() {
        let h = ha();
        let fp = box_flowpipe(
            &h,
            [Interval::point(15.0), Interval::point(15.0)],
            Mode::Off,
            120.0,
            0.05,
        )
        .unwrap();
        let tr = integrate(&h, [15.0, 15.0], Mode::Off, 120.0, 0.01).unwrap();
        for s in tr.samples.iter().step_by(50) {
            assert!(fp.contains(s.t, s.x, 1e-9), "t={} x={:?}", s.t, s.x);
        }
        assert!(fp
            .segments
            .iter()
            .all(|s| s.bounds[0].lo >= 10.0 && s.bounds[1].hi <= 30.0));
    }

    #[test]
    fn flowpipe_csv_round_trip() {
        let h = ha();
        let fp = box_flowpipe(
            &h,
            [Interval::new(19.9, 20.1), Interval::new(19.9, 20.1)],
            Mode::Off,
            5.0,
            0.5,
        )
        .unwrap();
        let back = parse_flowpipe_csv(&flowpipe_csv(&fp).unwrap()).unwrap();
        assert_eq!(back, fp.segments);
    }
}
