//! Scenario files: strict TOML with every default filled in and recorded.

use std::path::{Path, PathBuf};

use qlab_core::hamiltonian::{MolecularToy, Nucleus};
use qlab_core::{LatticeSpec, MassVector, PotentialSpec, StateSpec, Tolerances};
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, Result};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_CHECKS: [&str; 3] = ["ehrenfest", "identity", "hypothesis"];
pub const KNOWN_CHECKS: [&str; 4] = ["ehrenfest", "identity", "hypothesis", "h_opnorm"];

const TOP_KEYS: &[&str] = &[
    "name",
    "seed",
    "masses",
    "checks",
    "lattice",
    "potential",
    "state",
    "evolution",
    "trace",
    "tolerances",
    "bound",
    "scaling",
    "relax",
    "sweep",
    "output",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolutionParams {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
}

impl EvolutionParams {
    pub fn t_final(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundField {
    /// `|V|`
    Potential,
    /// `√|∂_jV|`
    SqrtGrad,
    /// `|∂_jV|`
    Grad,
    /// `T` itself: the self-bound sanity case.
    Kinetic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub field: BoundField,
    /// Zero-based.
    pub axis: usize,
    pub ensemble: usize,
    pub decay: f64,
    pub ceiling: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub mollify: Option<f64>,
    pub stability: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingParams {
    pub charge: f64,
    pub center: Vec<f64>,
    /// Softenings in units of the largest grid spacing, descending.
    pub softenings: Vec<f64>,
    /// Zero-based.
    pub axis: usize,
    pub exponent_window: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxParams {
    pub dtau: f64,
    pub max_steps: usize,
    pub energy_tol: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepParams {
    pub parameter: String,
    pub values: Vec<f64>,
    pub t_final: Option<f64>,
    pub record_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub potential: PotentialSpec,
    pub masses: MassVector,
    pub state: StateSpec,
    pub evolution: EvolutionParams,
    pub checks: Vec<String>,
    pub trace_interval: Option<[f64; 2]>,
    pub tolerances: Tolerances,
    pub bound: BoundParams,
    pub scaling: ScalingParams,
    pub relax: RelaxParams,
    pub sweep: Option<SweepParams>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// `key = value` for every default that was filled in.
    #[serde(skip)]
    pub defaults_applied: Vec<String>,
    #[serde(skip)]
    pub source: Table,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tolerances: Vec<(String, f64)>,
    pub output_dir: Option<PathBuf>,
}

impl Scenario {
    /// SHA-256 of the effective configuration (output location excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn dims(&self) -> usize {
        self.lattice.dims()
    }

    /// Re-parse with one dotted key replaced.
    pub fn with_override(&self, dotted: &str, value: Value) -> Result<Scenario> {
        let mut table = self.source.clone();
        set_dotted(&mut table, dotted, value)?;
        let mut s = from_table(table, &self.base_dir, &self.name)?;
        s.output_dir = self.output_dir.clone();
        Ok(s)
    }
}

pub fn parse_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario_str(&text, &base, &name, &path.display().to_string(), overrides)
}

pub fn parse_scenario_str(
    text: &str,
    base_dir: &Path,
    default_name: &str,
    file_label: &str,
    overrides: &Overrides,
) -> Result<Scenario> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse {
        file: file_label.to_string(),
        msg: e.to_string(),
    })?;
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed)
            .map_err(|_| CliError::Usage(format!("seed {seed} does not fit a TOML integer")))?;
        table.insert("seed".into(), Value::Integer(seed));
    }
    for (name, value) in &overrides.tolerances {
        set_dotted(&mut table, &format!("tolerances.{name}"), Value::Float(*value))?;
    }
    let mut s = from_table(table, base_dir, default_name)?;
    if let Some(dir) = &overrides.output_dir {
        s.output_dir = dir.clone();
    }
    Ok(s)
}

fn set_dotted(table: &mut Table, dotted: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    let mut t = table;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            t.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = t.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| {
            CliError::config(parts[..=i].join("."), "is not a table; cannot set a nested key")
        })?;
    }
    Ok(())
}

/// Nearest of `candidates` to `key`, if reasonably close.
pub fn suggest<'a>(key: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(key, c), *c))
        .min()
        .filter(|(d, c)| *d <= 3.max(c.len() / 3))
        .map(|(_, c)| c)
}

struct Node<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Node<'a> {
    fn root(table: &'a Table) -> Self {
        Self {
            path: String::new(),
            table,
        }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> CliError {
        CliError::config(self.key_path(key), msg)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort();
        for k in keys {
            if allowed.contains(&k.as_str()) {
                continue;
            }
            // report the full path of the first nested key so the user sees
            // exactly what was typed
            let tail = match &self.table[k] {
                Value::Table(t) => t.keys().next().map(|s| format!(".{s}")).unwrap_or_default(),
                _ => String::new(),
            };
            let hint = match suggest(k, allowed) {
                Some(s) => format!("; did you mean '{}{tail}'?", self.key_path(s)),
                None => format!("; valid keys here: {}", allowed.join(", ")),
            };
            return Err(CliError::config(
                format!("{}{tail}", self.key_path(k)),
                format!("unknown key{hint}"),
            ));
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn table(&self, key: &str) -> Result<Option<Node<'a>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Node {
                path: self.key_path(key),
                table: t,
            })),
            Some(_) => Err(self.err(key, "expected a table")),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| as_f64(v).ok_or_else(|| self.err(key, "expected a number"))).transpose()
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.uint(key)?.map(|v| v as usize))
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.err(key, "expected true or false")),
        }
    }

    /// A list of numbers; a bare number broadcasts to `dims` entries.
    fn f64_list(&self, key: &str, dims: Option<usize>) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => {
                let v: Option<Vec<f64>> = a.iter().map(as_f64).collect();
                let v = v.ok_or_else(|| self.err(key, "expected a list of numbers"))?;
                if let Some(d) = dims {
                    if v.len() != d {
                        return Err(self.err(key, format!("expected {d} entries, got {}", v.len())));
                    }
                }
                Ok(Some(v))
            }
            Some(v) => match (as_f64(v), dims) {
                (Some(x), Some(d)) => Ok(Some(vec![x; d])),
                (Some(x), None) => Ok(Some(vec![x])),
                (None, _) => Err(self.err(key, "expected a number or a list of numbers")),
            },
        }
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be positive, got {v}")))
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

struct Defaults(Vec<String>);

impl Defaults {
    fn note<T: std::fmt::Debug>(&mut self, path: &str, v: T) -> T {
        self.0.push(format!("{path} = {v:?}"));
        v
    }
}

pub fn from_table(table: Table, base_dir: &Path, default_name: &str) -> Result<Scenario> {
    let root = Node::root(&table);
    root.check_keys(TOP_KEYS)?;
    let mut defaults = Defaults(Vec::new());

    let name = match root.string("name")? {
        Some(s) => s.to_string(),
        None => default_name.to_string(),
    };
    let seed = match root.uint("seed")? {
        Some(s) => s,
        None => defaults.note("seed", DEFAULT_SEED),
    };

    let lattice_node = root
        .table("lattice")?
        .ok_or_else(|| CliError::config("lattice", "missing required table"))?;
    let lattice = parse_lattice(&lattice_node)?;
    let dims = lattice.dims();

    let explicit_masses = root.f64_list("masses", Some(dims))?;
    if let Some(m) = &explicit_masses {
        for &v in m {
            root.positive("masses", v)?;
        }
    }
    let mass_hint = explicit_masses.clone().unwrap_or_else(|| vec![1.0; dims]);

    let pot_node = root
        .table("potential")?
        .ok_or_else(|| CliError::config("potential", "missing required table"))?;
    let potential = parse_potential(&pot_node, dims, &mass_hint, &mut defaults)?;
    potential
        .validate(dims)
        .map_err(|e| CliError::config("potential", e.to_string()))?;

    let masses = match explicit_masses {
        Some(m) => m,
        None => match potential.natural_masses() {
            Some(m) => defaults.note("masses", m),
            None => defaults.note("masses", vec![1.0; dims]),
        },
    };
    let masses = MassVector::new(masses).map_err(|e| CliError::config("masses", e.to_string()))?;

    let state_node = root
        .table("state")?
        .ok_or_else(|| CliError::config("state", "missing required table"))?;
    let state = parse_state(&state_node, dims, seed, base_dir, &lattice, &mut defaults)?;

    let evolution = match root.table("evolution")? {
        Some(n) => parse_evolution(&n, &mut defaults)?,
        None => EvolutionParams {
            dt: defaults.note("evolution.dt", DEFAULT_DT),
            steps: defaults.note("evolution.steps", DEFAULT_STEPS),
            stride: defaults.note("evolution.stride", DEFAULT_STRIDE),
        },
    };

    let checks = match root.get("checks") {
        None => defaults.note("checks", DEFAULT_CHECKS.iter().map(|s| s.to_string()).collect()),
        Some(Value::Array(a)) => {
            let mut out = Vec::new();
            for v in a {
                let s = v.as_str().ok_or_else(|| root.err("checks", "expected a list of strings"))?;
                if !KNOWN_CHECKS.contains(&s) {
                    let hint = suggest(s, &KNOWN_CHECKS)
                        .map(|c| format!("; did you mean '{c}'?"))
                        .unwrap_or_default();
                    return Err(root.err("checks", format!("unknown check '{s}'{hint}")));
                }
                out.push(s.to_string());
            }
            out
        }
        Some(_) => return Err(root.err("checks", "expected a list of strings")),
    };

    let trace_interval = match root.table("trace")? {
        None => None,
        Some(n) => {
            n.check_keys(&["interval"])?;
            match n.f64_list("interval", Some(2))? {
                Some(v) if v[1] > v[0] => Some([v[0], v[1]]),
                Some(_) => return Err(n.err("interval", "must be [start, end] with end > start")),
                None => None,
            }
        }
    };

    let mut tolerances = Tolerances::default();
    if let Some(n) = root.table("tolerances")? {
        n.check_keys(&Tolerances::NAMES)?;
        for name in Tolerances::NAMES {
            if let Some(v) = n.f64(name)? {
                tolerances.set(name, v).map_err(|e| n.err(name, e.to_string()))?;
            }
        }
    }

    let bound = parse_bound(root.table("bound")?, dims, &mut defaults)?;
    let scaling = parse_scaling(root.table("scaling")?, dims, &potential, &mut defaults)?;
    let relax = parse_relax(root.table("relax")?, &mut defaults)?;
    let sweep = match root.table("sweep")? {
        None => None,
        Some(n) => Some(parse_sweep(&n)?),
    };

    let out_node = root.table("output")?;
    if let Some(n) = &out_node {
        n.check_keys(&["dir"])?;
    }
    let output_dir = match out_node.as_ref().map(|n| n.string("dir")).transpose()?.flatten() {
        Some(d) => base_dir.join(d),
        None => base_dir.join(defaults.note("output.dir", "out")),
    };

    Ok(Scenario {
        name,
        seed,
        lattice,
        potential,
        masses,
        state,
        evolution,
        checks,
        trace_interval,
        tolerances,
        bound,
        scaling,
        relax,
        sweep,
        output_dir,
        defaults_applied: defaults.0,
        source: table,
        base_dir: base_dir.to_path_buf(),
    })
}

fn parse_lattice(n: &Node) -> Result<LatticeSpec> {
    n.check_keys(&["dims", "points", "extent_min", "extent_max"])?;
    let explicit_dims = n.usize("dims")?;
    let array_len = ["points", "extent_min", "extent_max"]
        .iter()
        .find_map(|k| n.get(k).and_then(|v| v.as_array()).map(|a| a.len()));
    let dims = match (explicit_dims, array_len) {
        (Some(d), _) => d,
        (None, Some(l)) => l,
        (None, None) => 1,
    };
    if dims == 0 {
        return Err(n.err("dims", "must be at least 1"));
    }
    let points = n
        .f64_list("points", Some(dims))?
        .ok_or_else(|| n.err("points", "missing required key"))?;
    let mut pts = Vec::with_capacity(dims);
    for p in points {
        if p.fract() != 0.0 || p < 4.0 || !(p as usize).is_power_of_two() {
            return Err(n.err("points", format!("must be powers of two, at least 4; got {p}")));
        }
        pts.push(p as usize);
    }
    let min = n
        .f64_list("extent_min", Some(dims))?
        .ok_or_else(|| n.err("extent_min", "missing required key"))?;
    let max = n
        .f64_list("extent_max", Some(dims))?
        .ok_or_else(|| n.err("extent_max", "missing required key"))?;
    for (a, b) in min.iter().zip(&max) {
        if !(b > a) {
            return Err(n.err("extent_max", format!("must exceed lattice.extent_min ({b} <= {a})")));
        }
    }
    let spec = LatticeSpec::new(pts, min, max);
    spec.validate().map_err(|e| n.err("points", e.to_string()))?;
    Ok(spec)
}

fn parse_potential(n: &Node, dims: usize, mass_hint: &[f64], defaults: &mut Defaults) -> Result<PotentialSpec> {
    const KINDS: [&str; 7] = [
        "free",
        "harmonic",
        "uniform_field",
        "soft_coulomb",
        "regularized_coulomb_3d",
        "molecular_toy",
        "sum",
    ];
    let kind = n.string("kind")?.ok_or_else(|| n.err("kind", "missing required key"))?;
    let p = |k: &str| n.key_path(k);
    match kind {
        "free" => {
            n.check_keys(&["kind"])?;
            Ok(PotentialSpec::Free)
        }
        "harmonic" => {
            n.check_keys(&["kind", "frequencies", "masses", "center"])?;
            let frequencies = match n.f64_list("frequencies", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("frequencies"), vec![1.0; dims]),
            };
            for &w in &frequencies {
                n.positive("frequencies", w)?;
            }
            let masses = match n.f64_list("masses", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("masses"), mass_hint.to_vec()),
            };
            for &m in &masses {
                n.positive("masses", m)?;
            }
            let center = match n.f64_list("center", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("center"), vec![0.0; dims]),
            };
            Ok(PotentialSpec::Harmonic {
                masses,
                frequencies,
                center,
            })
        }
        "uniform_field" => {
            n.check_keys(&["kind", "slope"])?;
            let slope = n
                .f64_list("slope", Some(dims))?
                .ok_or_else(|| n.err("slope", "missing required key"))?;
            Ok(PotentialSpec::UniformField { slope })
        }
        "soft_coulomb" | "regularized_coulomb_3d" => {
            n.check_keys(&["kind", "softening", "charge", "center"])?;
            if kind == "regularized_coulomb_3d" && dims != 3 {
                return Err(n.err("kind", format!("regularized_coulomb_3d needs a 3-dimensional lattice, got {dims}")));
            }
            let softening = n
                .f64("softening")?
                .ok_or_else(|| n.err("softening", "missing required key"))?;
            let softening = n.positive("softening", softening)?;
            let charge = match n.f64("charge")? {
                Some(q) => n.positive("charge", q)?,
                None => defaults.note(&p("charge"), 1.0),
            };
            let center = match n.f64_list("center", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("center"), vec![0.0; dims]),
            };
            Ok(if kind == "soft_coulomb" {
                PotentialSpec::SoftCoulomb {
                    softening,
                    charge,
                    center,
                }
            } else {
                PotentialSpec::RegularizedCoulomb3d {
                    softening,
                    charge,
                    center,
                }
            })
        }
        "molecular_toy" => {
            n.check_keys(&["kind", "electrons", "softening", "nuclei"])?;
            let electrons = n
                .usize("electrons")?
                .ok_or_else(|| n.err("electrons", "missing required key"))?;
            let softening = n
                .f64("softening")?
                .ok_or_else(|| n.err("softening", "missing required key"))?;
            let softening = n.positive("softening", softening)?;
            let list = match n.get("nuclei") {
                Some(Value::Array(a)) => a,
                _ => return Err(n.err("nuclei", "expected an array of tables")),
            };
            let mut nuclei = Vec::new();
            for (i, v) in list.iter().enumerate() {
                let t = v
                    .as_table()
                    .ok_or_else(|| n.err(&format!("nuclei[{i}]"), "expected a table"))?;
                let nn = Node {
                    path: format!("{}[{i}]", p("nuclei")),
                    table: t,
                };
                nn.check_keys(&["charge", "mass", "position"])?;
                let charge = nn.f64("charge")?.ok_or_else(|| nn.err("charge", "missing required key"))?;
                let mass = nn.f64("mass")?.ok_or_else(|| nn.err("mass", "missing required key"))?;
                nuclei.push(Nucleus {
                    charge: nn.positive("charge", charge)?,
                    mass: nn.positive("mass", mass)?,
                    position: nn.f64("position")?,
                });
            }
            Ok(PotentialSpec::MolecularToy(MolecularToy {
                electrons,
                nuclei,
                softening,
            }))
        }
        "sum" => {
            n.check_keys(&["kind", "terms"])?;
            let list = match n.get("terms") {
                Some(Value::Array(a)) if !a.is_empty() => a,
                _ => return Err(n.err("terms", "expected a non-empty array of tables")),
            };
            let mut terms = Vec::new();
            for (i, v) in list.iter().enumerate() {
                let t = v
                    .as_table()
                    .ok_or_else(|| n.err(&format!("terms[{i}]"), "expected a table"))?;
                let tn = Node {
                    path: format!("{}[{i}]", p("terms")),
                    table: t,
                };
                terms.push(parse_potential(&tn, dims, mass_hint, defaults)?);
            }
            Ok(PotentialSpec::Sum { terms })
        }
        other => {
            let hint = suggest(other, &KINDS)
                .map(|s| format!("; did you mean '{s}'?"))
                .unwrap_or_else(|| format!("; expected one of {}", KINDS.join(", ")));
            Err(n.err("kind", format!("unknown potential '{other}'{hint}")))
        }
    }
}

fn parse_state(
    n: &Node,
    dims: usize,
    seed: u64,
    base_dir: &Path,
    lattice: &LatticeSpec,
    defaults: &mut Defaults,
) -> Result<StateSpec> {
    const KINDS: [&str; 4] = ["gaussian", "plane_wave", "random_smooth", "from_file"];
    let kind = n.string("kind")?.ok_or_else(|| n.err("kind", "missing required key"))?;
    let p = |k: &str| n.key_path(k);
    match kind {
        "gaussian" => {
            n.check_keys(&["kind", "center", "momentum", "width"])?;
            let center = match n.f64_list("center", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("center"), vec![0.0; dims]),
            };
            for (j, c) in center.iter().enumerate() {
                if !(*c >= lattice.extent_min[j] && *c < lattice.extent_max[j]) {
                    return Err(n.err(
                        "center",
                        format!(
                            "axis {} value {c} lies outside the lattice [{}, {})",
                            j + 1,
                            lattice.extent_min[j],
                            lattice.extent_max[j]
                        ),
                    ));
                }
            }
            let momentum = match n.f64_list("momentum", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("momentum"), vec![0.0; dims]),
            };
            let width = match n.f64_list("width", Some(dims))? {
                Some(v) => v,
                None => defaults.note(&p("width"), vec![0.5; dims]),
            };
            for &a in &width {
                n.positive("width", a)?;
            }
            Ok(StateSpec::Gaussian {
                center,
                momentum,
                width,
            })
        }
        "plane_wave" => {
            n.check_keys(&["kind", "momentum"])?;
            let momentum = n
                .f64_list("momentum", Some(dims))?
                .ok_or_else(|| n.err("momentum", "missing required key"))?;
            Ok(StateSpec::PlaneWave { momentum })
        }
        "random_smooth" => {
            n.check_keys(&["kind", "decay", "seed"])?;
            let decay = match n.f64("decay")? {
                Some(d) => d,
                None => defaults.note(&p("decay"), 6.0),
            };
            let min = (dims as f64 + 4.0) / 2.0;
            if !(decay > min) {
                return Err(n.err("decay", format!("must exceed (d+4)/2 = {min}, got {decay}")));
            }
            let seed = match n.uint("seed")? {
                Some(s) => s,
                None => defaults.note(&p("seed"), seed),
            };
            Ok(StateSpec::RandomSmooth { decay, seed })
        }
        "from_file" => {
            n.check_keys(&["kind", "path"])?;
            let path = n.string("path")?.ok_or_else(|| n.err("path", "missing required key"))?;
            Ok(StateSpec::FromFile {
                path: base_dir.join(path),
            })
        }
        other => {
            let hint = suggest(other, &KINDS)
                .map(|s| format!("; did you mean '{s}'?"))
                .unwrap_or_else(|| format!("; expected one of {}", KINDS.join(", ")));
            Err(n.err("kind", format!("unknown state '{other}'{hint}")))
        }
    }
}

fn parse_evolution(n: &Node, defaults: &mut Defaults) -> Result<EvolutionParams> {
    n.check_keys(&["dt", "steps", "stride"])?;
    let dt = match n.f64("dt")? {
        Some(v) => n.positive("dt", v)?,
        None => defaults.note("evolution.dt", DEFAULT_DT),
    };
    let steps = match n.usize("steps")? {
        Some(0) => return Err(n.err("steps", "must be at least 1")),
        Some(v) => v,
        None => defaults.note("evolution.steps", DEFAULT_STEPS),
    };
    let stride = match n.usize("stride")? {
        Some(0) => return Err(n.err("stride", "must be at least 1")),
        Some(v) => v,
        None => defaults.note("evolution.stride", DEFAULT_STRIDE),
    };
    Ok(EvolutionParams { dt, steps, stride })
}

fn axis_from(n: &Node, key: &str, dims: usize) -> Result<Option<usize>> {
    match n.usize(key)? {
        None => Ok(None),
        Some(a) if a >= 1 && a <= dims => Ok(Some(a - 1)),
        Some(a) => Err(n.err(key, format!("axes are numbered 1..={dims}, got {a}"))),
    }
}

fn parse_bound(n: Option<Node>, dims: usize, defaults: &mut Defaults) -> Result<BoundParams> {
    let empty = Table::new();
    let n = n.unwrap_or(Node {
        path: "bound".into(),
        table: &empty,
    });
    n.check_keys(&[
        "field",
        "axis",
        "ensemble",
        "decay",
        "ceiling",
        "alpha_max",
        "alpha_step",
        "mollify",
        "stability",
    ])?;
    let field = match n.string("field")? {
        None => defaults.note("bound.field", BoundField::SqrtGrad),
        Some("potential") => BoundField::Potential,
        Some("sqrt_grad") => BoundField::SqrtGrad,
        Some("grad") => BoundField::Grad,
        Some("kinetic") => BoundField::Kinetic,
        Some(other) => {
            let opts = ["potential", "sqrt_grad", "grad", "kinetic"];
            let hint = suggest(other, &opts)
                .map(|s| format!("; did you mean '{s}'?"))
                .unwrap_or_default();
            return Err(n.err("field", format!("unknown field '{other}'{hint}")));
        }
    };
    let axis = match axis_from(&n, "axis", dims)? {
        Some(a) => a,
        None => defaults.note("bound.axis", 1) - 1,
    };
    let ensemble = match n.usize("ensemble")? {
        Some(v) if v >= qlab_core::verifier::MIN_ENSEMBLE => v,
        Some(v) => {
            return Err(n.err(
                "ensemble",
                format!("needs at least {} members, got {v}", qlab_core::verifier::MIN_ENSEMBLE),
            ))
        }
        None => defaults.note("bound.ensemble", qlab_core::verifier::MIN_ENSEMBLE),
    };
    let decay = match n.f64("decay")? {
        Some(v) => v,
        None => defaults.note("bound.decay", 6.0),
    };
    let min = (dims as f64 + 4.0) / 2.0;
    if !(decay > min) {
        return Err(n.err("decay", format!("must exceed (d+4)/2 = {min}, got {decay}")));
    }
    let ceiling = match n.f64("ceiling")? {
        Some(v) if v >= 0.0 => v,
        Some(v) => return Err(n.err("ceiling", format!("must be non-negative, got {v}"))),
        None => defaults.note("bound.ceiling", 1.0),
    };
    let alpha_max = match n.f64("alpha_max")? {
        Some(v) => n.positive("alpha_max", v)?,
        None => defaults.note("bound.alpha_max", 1.5),
    };
    let alpha_step = match n.f64("alpha_step")? {
        Some(v) => n.positive("alpha_step", v)?,
        None => defaults.note("bound.alpha_step", 0.01),
    };
    let mollify = match n.f64("mollify")? {
        Some(v) if v > 0.0 && v < 1.0 => Some(v),
        Some(v) => return Err(n.err("mollify", format!("radius must lie in (0, 1), got {v}"))),
        None => None,
    };
    let stability = match n.bool("stability")? {
        Some(b) => b,
        None => defaults.note("bound.stability", true),
    };
    Ok(BoundParams {
        field,
        axis,
        ensemble,
        decay,
        ceiling,
        alpha_max,
        alpha_step,
        mollify,
        stability,
    })
}

fn parse_scaling(
    n: Option<Node>,
    dims: usize,
    potential: &PotentialSpec,
    defaults: &mut Defaults,
) -> Result<ScalingParams> {
    let empty = Table::new();
    let n = n.unwrap_or(Node {
        path: "scaling".into(),
        table: &empty,
    });
    n.check_keys(&["charge", "center", "softenings", "axis", "exponent_window"])?;
    let (pot_charge, pot_center) = match potential {
        PotentialSpec::RegularizedCoulomb3d { charge, center, .. }
        | PotentialSpec::SoftCoulomb { charge, center, .. } => (Some(*charge), Some(center.clone())),
        _ => (None, None),
    };
    let charge = match n.f64("charge")? {
        Some(q) => n.positive("charge", q)?,
        None => defaults.note("scaling.charge", pot_charge.unwrap_or(1.0)),
    };
    let center = match n.f64_list("center", Some(dims))? {
        Some(c) => c,
        None => defaults.note("scaling.center", pot_center.unwrap_or_else(|| vec![0.0; dims])),
    };
    let softenings = match n.f64_list("softenings", None)? {
        Some(v) => v,
        None => defaults.note("scaling.softenings", vec![32.0, 16.0, 8.0, 4.0]),
    };
    if softenings.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(n.err("softenings", "must be strictly descending"));
    }
    let axis = match axis_from(&n, "axis", dims)? {
        Some(a) => a,
        None => defaults.note("scaling.axis", 1) - 1,
    };
    let exponent_window = match n.f64_list("exponent_window", Some(2))? {
        Some(v) if v[0] < v[1] => [v[0], v[1]],
        Some(_) => return Err(n.err("exponent_window", "must be [low, high] with low < high")),
        None => defaults.note("scaling.exponent_window", [-0.65, -0.35]),
    };
    Ok(ScalingParams {
        charge,
        center,
        softenings,
        axis,
        exponent_window,
    })
}

fn parse_relax(n: Option<Node>, defaults: &mut Defaults) -> Result<RelaxParams> {
    let empty = Table::new();
    let n = n.unwrap_or(Node {
        path: "relax".into(),
        table: &empty,
    });
    n.check_keys(&["dtau", "max_steps", "energy_tol", "patience"])?;
    Ok(RelaxParams {
        dtau: match n.f64("dtau")? {
            Some(v) => n.positive("dtau", v)?,
            None => defaults.note("relax.dtau", 5e-3),
        },
        max_steps: match n.usize("max_steps")? {
            Some(0) => return Err(n.err("max_steps", "must be at least 1")),
            Some(v) => v,
            None => defaults.note("relax.max_steps", 20_000),
        },
        energy_tol: match n.f64("energy_tol")? {
            Some(v) => n.positive("energy_tol", v)?,
            None => defaults.note("relax.energy_tol", 1e-12),
        },
        patience: match n.usize("patience")? {
            Some(0) => return Err(n.err("patience", "must be at least 1")),
            Some(v) => v,
            None => defaults.note("relax.patience", 10),
        },
    })
}

fn parse_sweep(n: &Node) -> Result<SweepParams> {
    n.check_keys(&["parameter", "values", "t_final", "record_interval"])?;
    let parameter = n
        .string("parameter")?
        .ok_or_else(|| n.err("parameter", "missing required key"))?
        .to_string();
    if parameter.starts_with("sweep") {
        return Err(n.err("parameter", "cannot sweep the sweep table itself"));
    }
    let values = n
        .f64_list("values", None)?
        .ok_or_else(|| n.err("values", "missing required key"))?;
    if values.is_empty() {
        return Err(n.err("values", "needs at least one value"));
    }
    let t_final = n.f64("t_final")?.map(|v| n.positive("t_final", v)).transpose()?;
    let record_interval = n
        .f64("record_interval")?
        .map(|v| n.positive("record_interval", v))
        .transpose()?;
    Ok(SweepParams {
        parameter,
        values,
        t_final,
        record_interval,
    })
}
