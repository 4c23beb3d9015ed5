//! Instruction wire format.
//!
//! An instruction names a defect type, an operator, a region and an
//! operator-specific parameter map. Every length in the parameter map is a
//! fraction of the category radius `r_c`; angles are radians. Plane and
//! bounding-box coordinates are absolute model coordinates.
//!
//! ```json
//! {"schema_version": 1, "type": "bump", "operator": "mpas1d",
//!  "region": {"sample": {}}, "params": {"m": 1, "r": 0.05, "d": 0.02, "dir": 1},
//!  "seed": 7}
//! ```

use std::fmt;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mask::DefectType;
use crate::synth::freeform::GaussianKernel;
use crate::synth::geodesic::Polarity;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_GRAPH_K: usize = 8;
pub const DEFAULT_HOLE_THRESHOLD: f64 = 0.8;
pub const DEFAULT_LINE_EXTENT: f64 = 0.3;
pub const DEFAULT_FREEFORM_EXTENT: f64 = 0.2;
pub const DEFAULT_FREEFORM_ANCHORS: usize = 6;
pub const DEFAULT_KERNEL_COUNT: usize = 3;
pub const DEFAULT_AMPLITUDE_RANGE: [f64; 2] = [0.01, 0.05];
pub const DEFAULT_SIGMA_FRACTION: [f64; 2] = [0.1, 0.4];
pub const DEFAULT_H_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Line,
    Bend,
    Crack,
    Freeform,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::Line, Operator::Bend, Operator::Crack, Operator::Freeform];

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Line => "mpas1d",
            Operator::Bend => "mpas2d-bend",
            Operator::Crack => "mpas2d-crack",
            Operator::Freeform => "mpas3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.as_str() == s)
    }

    pub fn for_defect(u: DefectType) -> Self {
        match u {
            DefectType::Bump | DefectType::Dent | DefectType::Scratch | DefectType::Groove | DefectType::Hole => {
                Operator::Line
            }
            DefectType::Bend => Operator::Bend,
            DefectType::Crack => Operator::Crack,
            DefectType::Freeform => Operator::Freeform,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Anchors(Vec<usize>),
    /// Seeded sampling, optionally restricted to a box. `extent` bounds the
    /// spread of multi-anchor skeletons and hulls (fraction of `r_c`).
    Sample { bbox: Option<Aabb>, extent: Option<f64> },
}

impl Default for Region {
    fn default() -> Self {
        Region::Sample { bbox: None, extent: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub m: usize,
    pub r: f64,
    pub d: f64,
    pub dir: Polarity,
    pub k_graph: usize,
    pub hole_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendSpec {
    pub delta: f64,
    pub theta: f64,
    pub plane: Option<PlaneSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackSpec {
    pub tau: f64,
    pub sigma: f64,
    pub rim: f64,
    pub plane: Option<PlaneSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    /// Amplitude, center and spread are fractions of `r_c`.
    Explicit(Vec<GaussianKernel>),
    Sampled {
        count: usize,
        amplitude: [f64; 2],
        sigma_fraction: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeformSpec {
    pub m: usize,
    pub epsilon: f64,
    pub kernels: KernelChoice,
    pub k_smooth: usize,
    pub lambda: f64,
    pub h_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Line(LineSpec),
    Bend(BendSpec),
    Crack(CrackSpec),
    Freeform(FreeformSpec),
}

impl Params {
    pub fn operator(&self) -> Operator {
        match self {
            Params::Line(_) => Operator::Line,
            Params::Bend(_) => Operator::Bend,
            Params::Crack(_) => Operator::Crack,
            Params::Freeform(_) => Operator::Freeform,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisInstruction {
    pub schema_version: u32,
    pub defect: DefectType,
    pub operator: Operator,
    pub region: Region,
    pub params: Params,
    pub seed: u64,
}

impl SynthesisInstruction {
    pub fn new(defect: DefectType, region: Region, params: Params, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            defect,
            operator: params.operator(),
            region,
            params,
            seed,
        }
    }

    pub fn to_value(&self) -> Value {
        let region = match &self.region {
            Region::Anchors(a) => json!({ "anchors": a }),
            Region::Sample { bbox, extent } => {
                let mut s = Map::new();
                if let Some(b) = bbox {
                    s.insert("bbox".into(), json!({ "min": b.min, "max": b.max }));
                }
                if let Some(e) = extent {
                    s.insert("extent".into(), json!(e));
                }
                json!({ "sample": s })
            }
        };
        let plane_value = |p: &PlaneSpec| json!({ "normal": p.normal, "point": p.point });
        let params = match &self.params {
            Params::Line(l) => {
                let mut m = json!({ "m": l.m, "r": l.r, "d": l.d, "dir": l.dir, "k_graph": l.k_graph });
                if let Some(t) = l.hole_threshold {
                    m["hole_threshold"] = json!(t);
                }
                m
            }
            Params::Bend(b) => {
                let mut m = json!({ "delta": b.delta, "theta": b.theta });
                if let Some(p) = &b.plane {
                    m["plane"] = plane_value(p);
                }
                m
            }
            Params::Crack(c) => {
                let mut m = json!({ "tau": c.tau, "sigma": c.sigma, "rim": c.rim });
                if let Some(p) = &c.plane {
                    m["plane"] = plane_value(p);
                }
                m
            }
            Params::Freeform(f) => {
                let mut m = json!({
                    "m": f.m, "epsilon": f.epsilon, "k_smooth": f.k_smooth,
                    "lambda": f.lambda, "h_min": f.h_min,
                });
                match &f.kernels {
                    KernelChoice::Explicit(ks) => m["kernels"] = json!(ks),
                    KernelChoice::Sampled {
                        count,
                        amplitude,
                        sigma_fraction,
                    } => {
                        m["kernel_count"] = json!(count);
                        m["amplitude_range"] = json!(amplitude);
                        m["sigma_fraction"] = json!(sigma_fraction);
                    }
                }
                m
            }
        };
        json!({
            "schema_version": self.schema_version,
            "type": self.defect,
            "operator": self.operator.as_str(),
            "region": region,
            "params": params,
            "seed": self.seed,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("instruction serializes")
    }
}

/// Accumulates field errors so a single parse reports all of them.
struct Fields {
    errors: Vec<String>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

impl Fields {
    fn err(&mut self, path: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    /// First present key among `names`, with the name actually used.
    fn lookup<'v>(obj: &'v Map<String, Value>, names: &[&'static str]) -> Option<(&'static str, &'v Value)> {
        names.iter().find_map(|&n| obj.get(n).map(|v| (n, v)))
    }

    fn number(&mut self, obj: &Map<String, Value>, prefix: &str, names: &[&'static str], required: bool) -> Option<f64> {
        match Self::lookup(obj, names) {
            Some((n, v)) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.err(&format!("{prefix}.{n}"), format!("expected a number, found {}", type_name(v)));
                    None
                }
            },
            None => {
                if required {
                    self.err(&format!("{prefix}.{}", names[0]), "missing required field");
                }
                None
            }
        }
    }

    fn count(&mut self, obj: &Map<String, Value>, prefix: &str, names: &[&'static str], required: bool) -> Option<usize> {
        match Self::lookup(obj, names) {
            Some((n, v)) => match v.as_u64() {
                Some(x) => Some(x as usize),
                None => {
                    self.err(
                        &format!("{prefix}.{n}"),
                        format!("expected a nonnegative integer, found {}", type_name(v)),
                    );
                    None
                }
            },
            None => {
                if required {
                    self.err(&format!("{prefix}.{}", names[0]), "missing required field");
                }
                None
            }
        }
    }

    fn triple(&mut self, v: &Value, path: &str) -> Option<[f64; 3]> {
        self.numbers::<3>(v, path)
    }

    fn numbers<const N: usize>(&mut self, v: &Value, path: &str) -> Option<[f64; N]> {
        let arr = match v.as_array() {
            Some(a) if a.len() == N => a,
            _ => {
                self.err(path, format!("expected an array of {N} numbers"));
                return None;
            }
        };
        let mut out = [0.0; N];
        for (slot, x) in out.iter_mut().zip(arr) {
            match x.as_f64() {
                Some(f) if f.is_finite() => *slot = f,
                _ => {
                    self.err(path, format!("expected an array of {N} numbers"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn plane(&mut self, obj: &Map<String, Value>, prefix: &str) -> Option<PlaneSpec> {
        let v = obj.get("plane")?;
        let path = format!("{prefix}.plane");
        let Some(p) = v.as_object() else {
            self.err(&path, format!("expected an object, found {}", type_name(v)));
            return None;
        };
        let normal = match p.get("normal") {
            Some(n) => self.triple(n, &format!("{path}.normal")),
            None => {
                self.err(&format!("{path}.normal"), "missing required field");
                None
            }
        };
        let point = match p.get("point") {
            Some(n) => self.triple(n, &format!("{path}.point")),
            None => {
                self.err(&format!("{path}.point"), "missing required field");
                None
            }
        };
        Some(PlaneSpec {
            normal: normal?,
            point: point?,
        })
    }

    fn unknown_keys(&mut self, obj: &Map<String, Value>, prefix: &str, known: &[&str]) {
        for k in obj.keys() {
            if !known.contains(&k.as_str()) {
                self.err(&format!("{prefix}.{k}"), "unknown field");
            }
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "schema_version", "type", "u", "operator", "A", "region", "R", "params", "Θ", "Theta", "seed",
];
const LINE_KEYS: &[&str] = &["m", "r", "d", "dir", "k_graph", "hole_threshold"];
const BEND_KEYS: &[&str] = &["delta", "δ", "theta", "θ", "plane"];
const CRACK_KEYS: &[&str] = &["tau", "τ", "sigma", "σ", "rim", "r_c", "plane"];
const FREEFORM_KEYS: &[&str] = &[
    "m", "epsilon", "ε", "kernels", "kernel_count", "amplitude_range", "sigma_fraction", "k_smooth", "lambda",
    "λ", "h_min",
];

/// Parses an instruction document, reporting every missing or ill-typed
/// field in a single [`Error::Instruction`].
pub fn parse_instruction(text: &str) -> Result<SynthesisInstruction> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Instruction(format!("malformed JSON: {e}")))?;
    let Some(obj) = doc.as_object() else {
        return Err(Error::Instruction(format!(
            "expected a JSON object, found {}",
            type_name(&doc)
        )));
    };
    let mut f = Fields { errors: Vec::new() };
    f.unknown_keys(obj, "$", TOP_KEYS);

    let schema_version = match obj.get("schema_version") {
        None => SCHEMA_VERSION,
        Some(v) => match v.as_u64() {
            Some(x) if x == SCHEMA_VERSION as u64 => x as u32,
            Some(x) => {
                f.err("schema_version", format!("unsupported version {x}, expected {SCHEMA_VERSION}"));
                SCHEMA_VERSION
            }
            None => {
                f.err("schema_version", format!("expected an integer, found {}", type_name(v)));
                SCHEMA_VERSION
            }
        },
    };

    let defect = match Fields::lookup(obj, &["type", "u"]) {
        Some((_, Value::String(s))) => match s.parse::<DefectType>() {
            Ok(t) => Some(t),
            Err(_) => {
                f.err("type", format!("unknown defect type \"{s}\""));
                None
            }
        },
        Some((n, v)) => {
            f.err(n, format!("expected a string, found {}", type_name(v)));
            None
        }
        None => {
            f.err("type", "missing required field");
            None
        }
    };

    let declared = match Fields::lookup(obj, &["operator", "A"]) {
        Some((n, Value::String(s))) => match Operator::parse(s) {
            Some(o) => Some(o),
            None => {
                f.err(n, format!("unknown operator \"{s}\""));
                None
            }
        },
        Some((n, v)) => {
            f.err(n, format!("expected a string, found {}", type_name(v)));
            None
        }
        None => None,
    };
    let operator = match (defect, declared) {
        (Some(u), Some(a)) if Operator::for_defect(u) != a => {
            f.err(
                "operator",
                format!(
                    "defect type {u} requires operator {}, not {a}",
                    Operator::for_defect(u)
                ),
            );
            None
        }
        (Some(u), _) => Some(Operator::for_defect(u)),
        (None, a) => a,
    };

    let seed = match obj.get("seed") {
        Some(v) => match v.as_u64() {
            Some(s) => Some(s),
            None => {
                f.err("seed", format!("expected a nonnegative integer, found {}", type_name(v)));
                None
            }
        },
        None => {
            f.err("seed", "missing required field");
            None
        }
    };

    let region = parse_region(&mut f, Fields::lookup(obj, &["region", "R"]).map(|(_, v)| v));

    let params = match (Fields::lookup(obj, &["params", "Θ", "Theta"]), operator) {
        (Some((_, Value::Object(p))), Some(op)) => parse_params(&mut f, p, op, defect, region.as_ref()),
        (Some((n, v)), _) if !v.is_object() => {
            f.err(n, format!("expected an object, found {}", type_name(v)));
            None
        }
        (None, _) => {
            f.err("params", "missing required field");
            None
        }
        _ => None,
    };

    if !f.errors.is_empty() {
        return Err(Error::Instruction(f.errors.join("; ")));
    }
    Ok(SynthesisInstruction {
        schema_version,
        defect: defect.expect("checked"),
        operator: operator.expect("checked"),
        region: region.expect("checked"),
        params: params.expect("checked"),
        seed: seed.expect("checked"),
    })
}

fn parse_region(f: &mut Fields, v: Option<&Value>) -> Option<Region> {
    let Some(v) = v else {
        return Some(Region::default());
    };
    let Some(obj) = v.as_object() else {
        f.err("region", format!("expected an object, found {}", type_name(v)));
        return None;
    };
    match (obj.get("anchors"), obj.get("sample")) {
        (Some(_), Some(_)) => {
            f.err("region", "give either anchors or sample, not both");
            None
        }
        (Some(a), None) => {
            let parsed: Option<Vec<usize>> = a
                .as_array()
                .and_then(|xs| xs.iter().map(|x| x.as_u64().map(|i| i as usize)).collect());
            match parsed {
                Some(list) if !list.is_empty() => Some(Region::Anchors(list)),
                _ => {
                    f.err("region.anchors", "expected a nonempty array of point indices");
                    None
                }
            }
        }
        (None, Some(s)) => {
            let Some(s) = s.as_object() else {
                f.err("region.sample", format!("expected an object, found {}", type_name(s)));
                return None;
            };
            f.unknown_keys(s, "region.sample", &["bbox", "extent"]);
            let bbox = match s.get("bbox") {
                None => None,
                Some(b) => {
                    let min = b.get("min").and_then(|m| f.triple(m, "region.sample.bbox.min"));
                    let max = b.get("max").and_then(|m| f.triple(m, "region.sample.bbox.max"));
                    match (min, max) {
                        (Some(min), Some(max)) => Some(Aabb { min, max }),
                        _ => {
                            f.err("region.sample.bbox", "expected {\"min\": [x, y, z], \"max\": [x, y, z]}");
                            return None;
                        }
                    }
                }
            };
            let extent = f.number(s, "region.sample", &["extent"], false);
            Some(Region::Sample { bbox, extent })
        }
        (None, None) => {
            f.err("region", "expected an \"anchors\" or \"sample\" entry");
            None
        }
    }
}

fn parse_params(
    f: &mut Fields,
    p: &Map<String, Value>,
    op: Operator,
    defect: Option<DefectType>,
    region: Option<&Region>,
) -> Option<Params> {
    let anchor_count = match region {
        Some(Region::Anchors(a)) => Some(a.len()),
        _ => None,
    };
    match op {
        Operator::Line => {
            f.unknown_keys(p, "params", LINE_KEYS);
            let r = f.number(p, "params", &["r"], true);
            let d = f.number(p, "params", &["d"], true);
            let default_m = match defect {
                Some(DefectType::Scratch | DefectType::Groove) => 3,
                _ => 1,
            };
            let m = f.count(p, "params", &["m"], false).or(anchor_count).unwrap_or(default_m);
            let dir = match p.get("dir") {
                None => Some(match defect {
                    Some(DefectType::Bump | DefectType::Groove) => Polarity::Outward,
                    _ => Polarity::Inward,
                }),
                Some(v) => match v.as_f64() {
                    Some(x) if x == 1.0 => Some(Polarity::Outward),
                    Some(x) if x == -1.0 => Some(Polarity::Inward),
                    _ => {
                        f.err("params.dir", format!("expected +1 or -1, found {v}"));
                        None
                    }
                },
            };
            let k_graph = f.count(p, "params", &["k_graph"], false).unwrap_or(DEFAULT_GRAPH_K);
            let hole_threshold = f.number(p, "params", &["hole_threshold"], false);
            let hole_threshold = match (defect, hole_threshold) {
                (Some(DefectType::Hole), t) => Some(t.unwrap_or(DEFAULT_HOLE_THRESHOLD)),
                (_, Some(_)) => {
                    f.err("params.hole_threshold", "only valid for hole instructions");
                    None
                }
                (_, None) => None,
            };
            Some(Params::Line(LineSpec {
                m,
                r: r?,
                d: d?,
                dir: dir?,
                k_graph,
                hole_threshold,
            }))
        }
        Operator::Bend => {
            f.unknown_keys(p, "params", BEND_KEYS);
            let delta = f.number(p, "params", &["delta", "δ"], true);
            let theta = f.number(p, "params", &["theta", "θ"], true);
            let plane = f.plane(p, "params");
            Some(Params::Bend(BendSpec {
                delta: delta?,
                theta: theta?,
                plane,
            }))
        }
        Operator::Crack => {
            f.unknown_keys(p, "params", CRACK_KEYS);
            let tau = f.number(p, "params", &["tau", "τ"], true);
            let sigma = f.number(p, "params", &["sigma", "σ"], false).unwrap_or(0.0);
            let rim = f.number(p, "params", &["rim", "r_c"], true);
            let plane = f.plane(p, "params");
            Some(Params::Crack(CrackSpec {
                tau: tau?,
                sigma,
                rim: rim?,
                plane,
            }))
        }
        Operator::Freeform => {
            f.unknown_keys(p, "params", FREEFORM_KEYS);
            let epsilon = f.number(p, "params", &["epsilon", "ε"], true);
            let m = f
                .count(p, "params", &["m"], false)
                .or(anchor_count)
                .unwrap_or(DEFAULT_FREEFORM_ANCHORS);
            let kernels = match p.get("kernels") {
                Some(v) => match serde_json::from_value::<Vec<GaussianKernel>>(v.clone()) {
                    Ok(ks) => Some(KernelChoice::Explicit(ks)),
                    Err(e) => {
                        f.err("params.kernels", format!("expected a list of {{amplitude, center, sigma}}: {e}"));
                        None
                    }
                },
                None => {
                    let count = f.count(p, "params", &["kernel_count"], false).unwrap_or(DEFAULT_KERNEL_COUNT);
                    let amplitude = match p.get("amplitude_range") {
                        Some(v) => f.numbers::<2>(v, "params.amplitude_range"),
                        None => Some(DEFAULT_AMPLITUDE_RANGE),
                    };
                    let sigma_fraction = match p.get("sigma_fraction") {
                        Some(v) => f.numbers::<2>(v, "params.sigma_fraction"),
                        None => Some(DEFAULT_SIGMA_FRACTION),
                    };
                    Some(KernelChoice::Sampled {
                        count,
                        amplitude: amplitude?,
                        sigma_fraction: sigma_fraction?,
                    })
                }
            };
            let k_smooth = f
                .count(p, "params", &["k_smooth"], false)
                .unwrap_or(crate::synth::freeform::DEFAULT_SMOOTH_K);
            let lambda = f
                .number(p, "params", &["lambda", "λ"], false)
                .unwrap_or(crate::synth::freeform::DEFAULT_SMOOTH_LAMBDA);
            let h_min = f.number(p, "params", &["h_min"], false).unwrap_or(DEFAULT_H_MIN);
            Some(Params::Freeform(FreeformSpec {
                m,
                epsilon: epsilon?,
                kernels: kernels?,
                k_smooth,
                lambda,
                h_min,
            }))
        }
    }
}
