//! Open-loop reach tubes of affine discrete-time models over octagonal
//! templates, and containment checks against given polytopes.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::benchmarks::BenchmarkId;
use crate::discretize::DiscreteModel;
use crate::error::{check_dim, BasError, Result};
use crate::io::{fmt17, join17};

/// Axis-aligned box, closed per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(BasError::Infeasible(format!(
                "box dimension {i}: lower {} exceeds upper {}",
                lo[i], hi[i]
            )));
        }
        Ok(BoxSet { lo, hi })
    }

    pub fn point(p: &[f64]) -> Self {
        BoxSet {
            lo: p.to_vec(),
            hi: p.to_vec(),
        }
    }

    pub fn empty_space() -> Self {
        BoxSet {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)))
    }

    pub fn support(&self, d: &DVector<f64>) -> Result<f64> {
        check_dim("direction", self.dim(), d.len())?;
        Ok((0..self.dim())
            .map(|i| {
                if d[i] >= 0.0 {
                    d[i] * self.hi[i]
                } else {
                    d[i] * self.lo[i]
                }
            })
            .sum())
    }

    /// The corner attaining the support in direction d.
    pub fn maximizer(&self, d: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| if d[i] >= 0.0 { self.hi[i] } else { self.lo[i] })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    fn to_zonotope(&self) -> Zonotope {
        let n = self.dim();
        let generators = (0..n)
            .filter(|&i| self.hi[i] > self.lo[i])
            .map(|i| {
                let mut g = DVector::zeros(n);
                g[i] = 0.5 * (self.hi[i] - self.lo[i]);
                g
            })
            .collect();
        Zonotope {
            center: self.center(),
            generators,
        }
    }
}

/// c + Σ βᵢ gᵢ, |βᵢ| ≤ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: DVector<f64>,
    pub generators: Vec<DVector<f64>>,
}

impl Zonotope {
    pub fn support(&self, d: &DVector<f64>) -> f64 {
        d.dot(&self.center) + self.generators.iter().map(|g| d.dot(g).abs()).sum::<f64>()
    }

    /// A·Z ⊕ B·U ⊕ F·D ⊕ {q}
    fn affine_step(&self, model: &DiscreteModel, u: &Zonotope, d: &Zonotope) -> Zonotope {
        let mut center = &model.a * &self.center + &model.q;
        if model.nu() > 0 {
            center += &model.b * &u.center;
        }
        if model.nd() > 0 {
            center += &model.f * &d.center;
        }
        let mut generators: Vec<DVector<f64>> = self.generators.iter().map(|g| &model.a * g).collect();
        generators.extend(u.generators.iter().map(|g| &model.b * g));
        generators.extend(d.generators.iter().map(|g| &model.f * g));
        generators.retain(|g| g.iter().any(|v| *v != 0.0));
        Zonotope { center, generators }
    }
}

/// {x : dᵀx ≤ b for every (d, b)}, directions unit-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePolytope {
    pub directions: Vec<Vec<f64>>,
    pub bounds: Vec<f64>,
}

/// ±eᵢ, then ±eᵢ±eⱼ (i < j) scaled to unit length.
pub fn octagon_directions(n: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::with_capacity(2 * n + 2 * n * n.saturating_sub(1));
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = DVector::zeros(n);
            d[i] = s;
            dirs.push(d);
        }
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = DVector::zeros(n);
                d[i] = si * r;
                d[j] = sj * r;
                dirs.push(d);
            }
        }
    }
    dirs
}

fn normalized(d: &[f64]) -> Result<DVector<f64>> {
    let v = DVector::from_column_slice(d);
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(BasError::InvalidInput("zero or non-finite direction".into()));
    }
    Ok(v / n)
}

impl TemplatePolytope {
    /// Facets from raw (unnormalized) rows a·x ≤ b.
    pub fn from_facets(rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut directions = Vec::with_capacity(rows.len());
        let mut bounds = Vec::with_capacity(rows.len());
        for (a, b) in rows {
            let n = DVector::from_column_slice(a).norm();
            directions.push(normalized(a)?.as_slice().to_vec());
            bounds.push(b / n);
        }
        let p = TemplatePolytope { directions, bounds };
        if let Some(first) = p.directions.first() {
            if p.directions.iter().any(|d| d.len() != first.len()) {
                return Err(BasError::InvalidInput("facets of mixed dimension".into()));
            }
        }
        Ok(p)
    }

    pub fn from_box(b: &BoxSet, directions: &[DVector<f64>]) -> Result<Self> {
        Ok(TemplatePolytope {
            directions: directions.iter().map(|d| d.as_slice().to_vec()).collect(),
            bounds: directions.iter().map(|d| b.support(d)).collect::<Result<_>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn direction(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.directions[i])
    }

    /// Index of the facet whose direction equals `d` (unit vectors).
    pub fn find(&self, d: &DVector<f64>) -> Option<usize> {
        self.directions
            .iter()
            .position(|e| e.iter().zip(d.iter()).all(|(a, b)| (a - b).abs() < 1e-12))
    }

    /// max dᵀx over the polytope.
    pub fn support(&self, d: &DVector<f64>) -> Result<f64> {
        check_dim("direction", self.dim(), d.len())?;
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..self.dim())
            .map(|i| lp.add_var(d[i], (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        for (dir, b) in self.directions.iter().zip(&self.bounds) {
            let expr: Vec<_> = vars.iter().copied().zip(dir.iter().copied()).collect();
            lp.add_constraint(expr, ComparisonOp::Le, *b);
        }
        match lp.solve() {
            Ok(SolveOutcome::Solution(s)) => Ok(s.objective()),
            Ok(_) => Err(BasError::InvalidInput("LP interrupted".into())),
            Err(microlp::Error::Unbounded) => Err(BasError::Unbounded),
            Err(microlp::Error::Infeasible) => Err(BasError::Infeasible("empty template polytope".into())),
            Err(e) => Err(BasError::InvalidInput(e.to_string())),
        }
    }

    /// CSV rows `d_1,…,d_n,b`.
    pub fn to_csv(&self, state_names: &[&str]) -> String {
        let mut s = state_names
            .iter()
            .map(|n| format!("d_{n}"))
            .chain(std::iter::once("b".to_string()))
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for (d, b) in self.directions.iter().zip(&self.bounds) {
            s.push_str(&join17(d.iter().copied()));
            s.push(',');
            s.push_str(&fmt17(*b));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut directions = Vec::new();
        let mut bounds = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| BasError::TraceFormat {
                        line: i + 2,
                        message: format!("not a number: `{s}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (b, d) = nums.split_last().ok_or_else(|| BasError::TraceFormat {
                line: i + 2,
                message: "empty row".into(),
            })?;
            directions.push(d.to_vec());
            bounds.push(*b);
        }
        Ok(TemplatePolytope { directions, bounds })
    }
}

/// Sets accepted as reach-step input.
#[derive(Debug, Clone)]
pub enum ReachSet {
    Box(BoxSet),
    Template(TemplatePolytope),
    Zonotope(Zonotope),
}

pub fn support(set: &ReachSet, d: &DVector<f64>) -> Result<f64> {
    match set {
        ReachSet::Box(b) => b.support(d),
        ReachSet::Template(p) => p.support(d),
        ReachSet::Zonotope(z) => {
            check_dim("direction", z.center.len(), d.len())?;
            Ok(z.support(d))
        }
    }
}

fn check_model(model: &DiscreteModel, u: &BoxSet, d: &BoxSet) -> Result<()> {
    if !model.is_deterministic() {
        return Err(BasError::StochasticModel);
    }
    check_dim("input set", model.nu(), u.dim())?;
    check_dim("disturbance set", model.nd(), d.dim())
}

/// One step in every template direction:
/// ρ(X, Aᵀd) + ρ(U, Bᵀd) + ρ(D, Fᵀd) + dᵀQ.
pub fn reach_step(
    x: &ReachSet,
    model: &DiscreteModel,
    u: &BoxSet,
    d: &BoxSet,
    template: &[DVector<f64>],
) -> Result<TemplatePolytope> {
    check_model(model, u, d)?;
    let mut bounds = Vec::with_capacity(template.len());
    for dir in template {
        check_dim("direction", model.nx(), dir.len())?;
        let mut b = support(x, &(model.a.transpose() * dir))? + dir.dot(&model.q);
        if model.nu() > 0 {
            b += u.support(&(model.b.transpose() * dir))?;
        }
        if model.nd() > 0 {
            b += d.support(&(model.f.transpose() * dir))?;
        }
        bounds.push(b);
    }
    Ok(TemplatePolytope {
        directions: template.iter().map(|d| d.as_slice().to_vec()).collect(),
        bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTube {
    /// N+1 polytopes, step 0 is the template hull of X0.
    pub steps: Vec<TemplatePolytope>,
    /// Per-direction maximum over the steps.
    pub union: TemplatePolytope,
}

/// Per-step template bounds of the exact reachable sets. The sets are carried
/// as zonotopes, so each bound is tight (no wrapping between steps).
pub fn reach_tube(
    model: &DiscreteModel,
    x0: &BoxSet,
    u: &BoxSet,
    d: &BoxSet,
    n: usize,
    template: &[DVector<f64>],
) -> Result<ReachTube> {
    check_model(model, u, d)?;
    check_dim("initial set", model.nx(), x0.dim())?;
    let (uz, dz) = (u.to_zonotope(), d.to_zonotope());
    let mut z = x0.to_zonotope();
    let mut steps = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            z = z.affine_step(model, &uz, &dz);
        }
        steps.push(TemplatePolytope {
            directions: template.iter().map(|d| d.as_slice().to_vec()).collect(),
            bounds: template.iter().map(|d| z.support(d)).collect(),
        });
    }
    let union = TemplatePolytope {
        directions: steps[0].directions.clone(),
        bounds: (0..template.len())
            .map(|i| steps.iter().map(|p| p.bounds[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    };
    Ok(ReachTube { steps, union })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    pub inside: bool,
    /// min over facets of b − dᵀx (+∞ for nothing to check)
    pub worst_margin: f64,
    pub worst_facet: Option<usize>,
}

pub fn check_point(x: &[f64], poly: &TemplatePolytope, slack: f64) -> Containment {
    let mut worst = f64::INFINITY;
    let mut facet = None;
    for (i, (d, b)) in poly.directions.iter().zip(&poly.bounds).enumerate() {
        let m = b - d.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        if m < worst {
            worst = m;
            facet = Some(i);
        }
    }
    Containment {
        inside: worst >= -slack,
        worst_margin: worst,
        worst_facet: facet,
    }
}

/// Checks every point of a state sequence.
pub fn check_containment(points: &[Vec<f64>], poly: &TemplatePolytope, slack: f64) -> Containment {
    points.iter().fold(
        Containment {
            inside: true,
            worst_margin: f64::INFINITY,
            worst_facet: None,
        },
        |acc, x| {
            let c = check_point(x, poly, slack);
            if c.worst_margin < acc.worst_margin {
                Containment {
                    inside: acc.inside && c.inside,
                    ..c
                }
            } else {
                Containment {
                    inside: acc.inside && c.inside,
                    ..acc
                }
            }
        },
    )
}

/// Facet lists printed for the cs1 reach tubes: coefficients on
/// (T_z1, T_z2, T_rw_r1, T_rw_r2) and the bound.
type PrintedFacet = ([i8; 4], &'static str);

const MD_FACETS: [PrintedFacet; 32] = [
    ([1, 0, 0, 0], "22.2282"),
    ([0, 1, 0, 0], "22"),
    ([0, 0, 1, 0], "40"),
    ([0, 0, 0, 1], "40"),
    ([-1, 0, 0, 0], "-10.0899"),
    ([0, -1, 0, 0], "-5.40334"),
    ([0, 0, -1, 0], "105.958"),
    ([0, 0, 0, -1], "-11.1481"),
    ([1, 1, 0, 0], "44"),
    ([1, 0, 1, 0], "62"),
    ([1, 0, 0, 1], "62"),
    ([1, -1, 0, 0], "9.40198"),
    ([1, 0, -1, 0], "116.097"),
    ([1, 0, 0, -1], "1.12788"),
    ([-1, 1, 0, 0], "7"),
    ([-1, 0, 1, 0], "25"),
    ([-1, 0, 0, 1], "25"),
    ([-1, -1, 0, 0], "-15.4932"),
    ([-1, 0, -1, 0], "95.8203"),
    ([-1, 0, 0, -1], "-21.238"),
    ([0, 1, 1, 0], "62"),
    ([0, 1, 0, 1], "62"),
    ([0, 1, -1, 0], "114.105"),
    ([0, 1, 0, -1], "-5.50237"),
    ([0, -1, 1, 0], "25"),
    ([0, -1, 0, 1], "25"),
    ([0, -1, -1, 0], "100.555"),
    ([0, -1, 0, -1], "-16.5515"),
    ([0, 0, 1, 1], "80"),
    ([0, 0, 1, -1], "10"),
    ([0, 0, -1, 1], "126.441"),
    ([0, 0, -1, -1], "94.8101"),
];

const MDA_FACETS: [PrintedFacet; 32] = [
    ([1, 0, 0, 0], "22.3242"),
    ([0, 1, 0, 0], "22"),
    ([0, 0, 1, 0], "40"),
    ([0, 0, 0, 1], "40"),
    ([-1, 0, 0, 0], "-10.1225"),
    ([0, -1, 0, 0], "-5.38875"),
    ([0, 0, -1, 0], "109.275"),
    ([0, 0, 0, -1], "-11.1512"),
    ([1, 1, 0, 0], "44"),
    ([1, 0, 1, 0], "62"),
    ([1, 0, 0, 1], "62"),
    ([1, -1, 0, 0], "9.50273"),
    ([1, 0, -1, 0], "119.446"),
    ([1, 0, 0, -1], "1.20718"),
    ([-1, 1, 0, 0], "7"),
    ([-1, 0, 1, 0], "25"),
    ([-1, 0, 0, 1], "25"),
    ([-1, -1, 0, 0], "-15.5113"),
    ([-1, 0, -1, 0], "99.1041"),
    ([-1, 0, 0, -1], "-21.2737"),
    ([0, 1, 1, 0], "62"),
    ([0, 1, 0, 1], "62"),
    ([0, 1, -1, 0], "117.336"),
    ([0, 1, 0, -1], "-5.51993"),
    ([0, -1, 1, 0], "25"),
    ([0, -1, 0, 1], "25"),
    ([0, -1, -1, 0], "103.886"),
    ([0, -1, 0, -1], "-16.5399"),
    ([0, 0, 1, 1], "80"),
    ([0, 0, 1, -1], "10"),
    ([0, 0, -1, 1], "129.684"),
    ([0, 0, -1, -1], "98.1239"),
];

/// Raw printed facets (coefficients, bound literal) for cs1-det / cs1-dist.
pub fn printed_facets(id: BenchmarkId) -> Option<&'static [PrintedFacet]> {
    match id {
        BenchmarkId::Cs1Det => Some(&MD_FACETS),
        BenchmarkId::Cs1Dist => Some(&MDA_FACETS),
        _ => None,
    }
}

/// The printed tube polytope, unit-normalized.
pub fn appendix_polytope(id: BenchmarkId) -> Option<TemplatePolytope> {
    let facets = printed_facets(id)?;
    let rows: Vec<(Vec<f64>, f64)> = facets
        .iter()
        .map(|(a, b)| {
            (
                a.iter().map(|v| f64::from(*v)).collect(),
                b.parse().expect("printed bound"),
            )
        })
        .collect();
    Some(TemplatePolytope::from_facets(&rows).expect("printed facets are valid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetComparison {
    pub direction: Vec<f64>,
    pub ours: f64,
    pub reference: f64,
    /// reference − ours; positive means ours is tighter
    pub margin: f64,
}

/// Pairs facets with equal directions.
pub fn compare_facets(ours: &TemplatePolytope, reference: &TemplatePolytope) -> Vec<FacetComparison> {
    reference
        .directions
        .iter()
        .zip(&reference.bounds)
        .filter_map(|(d, b)| {
            let i = ours.find(&DVector::from_column_slice(d))?;
            Some(FacetComparison {
                direction: d.clone(),
                ours: ours.bounds[i],
                reference: *b,
                margin: b - ours.bounds[i],
            })
        })
        .collect()
}

/// Default disturbance set for cs1-dist: both CO₂ channels in [0, 1000] ppm.
pub fn default_disturbance_box(model: &DiscreteModel) -> BoxSet {
    let nd = model.nd();
    BoxSet {
        lo: vec![0.0; nd],
        hi: vec![1000.0; nd],
    }
}
