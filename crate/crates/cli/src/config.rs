//! Flat `key = value` run configuration. Every key is also a command-line
//! flag of the same name; flags override the file, the file overrides the
//! defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// `(key, default, help)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("set", "square", "set family: square, disk, segment, interval, cusp_out:P, cusp_in:P, cantor:DEPTH, sierpinski:DEPTH, points_file:PATH"),
    ("h", "2^-6", "grid resolution of lattice families"),
    ("size", "", "family size parameter (side, diameter, length); empty for the family default"),
    ("dim", "2", "coordinate count of a points file"),
    ("eps_ladder", "2^-3..2^-9", "scales for the LMI sweeps"),
    ("pass_floor", "0.05", "worst spanning constant needed for a pass"),
    ("decay_slope", "0.5", "log-log decay slope of the spanning constant that fails"),
    ("max_points", "256", "boundary points sampled by the LMI sweep"),
    ("k", "2", "polynomial degree of Markov factors and the uniform constant"),
    ("n", "2", "jet order of the classical operator and the reports"),
    ("n_max", "4", "moment truncation of the full operator"),
    ("k_max", "1", "number of radii in the weight"),
    ("delta", "0.5", "slack in the radius recursion"),
    ("eps0", "1", "twice the weight at the origin, in (0, 2]"),
    ("jets", "20", "size of the trigonometric jet corpus"),
    ("max_freq", "1", "largest frequency in the jet corpus"),
    ("jet_file", "", "jet file to extend instead of the corpus"),
    ("levels", "", "resolutions for continuity tables; empty for h alone"),
    ("moment_ladder", "2^-4,2^-6,2^-8", "scales of the moment convergence table"),
    ("points", "6", "boundary points probed by Markov and moment tables"),
    ("grid", "5", "lattice points per axis on every cube support for continuity sups"),
    ("samples", "2000", "collar samples for partition and reproduction checks"),
    ("out", "out", "output directory"),
    ("seed", "1", "seed of every sampled quantity"),
];

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunConfig {
    pub set: String,
    pub h: f64,
    pub size: Option<f64>,
    pub dim: usize,
    pub eps_ladder: Vec<f64>,
    pub pass_floor: f64,
    pub decay_slope: f64,
    pub max_points: usize,
    pub k: u32,
    pub n: u32,
    pub n_max: u32,
    pub k_max: u32,
    pub delta: f64,
    pub eps0: f64,
    pub jets: usize,
    pub max_freq: u32,
    pub jet_file: Option<PathBuf>,
    pub levels: Vec<f64>,
    pub moment_ladder: Vec<f64>,
    pub points: usize,
    pub grid: usize,
    pub samples: usize,
    pub out: PathBuf,
    pub seed: u64,
}

/// Parses the text of a configuration file.
pub fn parse_file_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::ConfigLine { line: ln + 1, message: format!("expected key = value, got '{line}'") })?;
        let k = k.trim();
        if !KEYS.iter().any(|(key, _, _)| *key == k) {
            return Err(CliError::ConfigLine { line: ln + 1, message: format!("unknown key '{k}'") });
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn load_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_file_text(&text)
}

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::BadValue { key: key.to_string(), message: message.into() }
}

/// A number, or `2^-k` / `2^k`.
pub fn parse_number(key: &str, s: &str) -> CliResult<f64> {
    let s = s.trim();
    let v = match s.strip_prefix("2^") {
        Some(e) => 2f64.powi(e.parse::<i32>().map_err(|e| bad(key, format!("'{s}': {e}")))?),
        None => s.parse::<f64>().map_err(|e| bad(key, format!("'{s}': {e}")))?,
    };
    if !v.is_finite() {
        return Err(bad(key, format!("'{s}' is not finite")));
    }
    Ok(v)
}

/// Comma-separated numbers; an item `2^-a..2^-b` expands to the dyadic run.
pub fn parse_list(key: &str, s: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let exp = |t: &str| -> CliResult<i32> {
                t.trim()
                    .strip_prefix("2^")
                    .ok_or_else(|| bad(key, format!("range '{item}' must use powers of two")))?
                    .parse::<i32>()
                    .map_err(|e| bad(key, format!("'{item}': {e}")))
            };
            let (ea, eb) = (exp(a)?, exp(b)?);
            let step = if eb >= ea { 1 } else { -1 };
            let mut e = ea;
            loop {
                out.push(2f64.powi(e));
                if e == eb {
                    break;
                }
                e += step;
            }
        } else {
            out.push(parse_number(key, item)?);
        }
    }
    Ok(out)
}

fn parse_int<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| bad(key, format!("'{s}': {e}")))
}

impl RunConfig {
    /// Resolves defaults, then `file`, then `flags`.
    pub fn resolve(file: &BTreeMap<String, String>, flags: &BTreeMap<String, String>) -> CliResult<Self> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect();
        for (k, v) in file.iter().chain(flags) {
            if !map.contains_key(k) {
                return Err(CliError::Usage(format!("unknown key '{k}'")));
            }
            map.insert(k.clone(), v.clone());
        }
        let get = |k: &str| map[k].as_str();
        let opt_path = |k: &str| (!get(k).is_empty()).then(|| PathBuf::from(get(k)));
        let cfg = RunConfig {
            set: get("set").to_string(),
            h: parse_number("h", get("h"))?,
            size: if get("size").is_empty() { None } else { Some(parse_number("size", get("size"))?) },
            dim: parse_int("dim", get("dim"))?,
            eps_ladder: parse_list("eps_ladder", get("eps_ladder"))?,
            pass_floor: parse_number("pass_floor", get("pass_floor"))?,
            decay_slope: parse_number("decay_slope", get("decay_slope"))?,
            max_points: parse_int("max_points", get("max_points"))?,
            k: parse_int("k", get("k"))?,
            n: parse_int("n", get("n"))?,
            n_max: parse_int("n_max", get("n_max"))?,
            k_max: parse_int("k_max", get("k_max"))?,
            delta: parse_number("delta", get("delta"))?,
            eps0: parse_number("eps0", get("eps0"))?,
            jets: parse_int("jets", get("jets"))?,
            max_freq: parse_int("max_freq", get("max_freq"))?,
            jet_file: opt_path("jet_file"),
            levels: parse_list("levels", get("levels"))?,
            moment_ladder: parse_list("moment_ladder", get("moment_ladder"))?,
            points: parse_int("points", get("points"))?,
            grid: parse_int("grid", get("grid"))?,
            samples: parse_int("samples", get("samples"))?,
            out: PathBuf::from(get("out")),
            seed: parse_int("seed", get("seed"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let positive = |key: &str, v: f64| if v > 0.0 { Ok(()) } else { Err(bad(key, format!("{v} must be positive"))) };
        positive("h", self.h)?;
        if self.h > 0.5 {
            return Err(bad("h", "must not exceed 1/2"));
        }
        if let Some(s) = self.size {
            positive("size", s)?;
        }
        if !(1..=3).contains(&self.dim) {
            return Err(bad("dim", "must be 1, 2 or 3"));
        }
        for (key, ladder) in [("eps_ladder", &self.eps_ladder), ("moment_ladder", &self.moment_ladder), ("levels", &self.levels)] {
            if let Some(v) = ladder.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return Err(bad(key, format!("{v} outside (0, 1]")));
            }
        }
        if self.eps_ladder.is_empty() {
            return Err(bad("eps_ladder", "empty ladder"));
        }
        if self.moment_ladder.is_empty() {
            return Err(bad("moment_ladder", "empty ladder"));
        }
        positive("pass_floor", self.pass_floor)?;
        positive("decay_slope", self.decay_slope)?;
        positive("delta", self.delta)?;
        if !(self.eps0 > 0.0 && self.eps0 <= 2.0) {
            return Err(bad("eps0", "must lie in (0, 2]"));
        }
        if self.k == 0 || self.k > 8 {
            return Err(bad("k", "must lie in 1..=8"));
        }
        if self.n > 4 {
            return Err(bad("n", "must not exceed 4"));
        }
        if self.n_max < self.n || self.n_max > 6 {
            return Err(bad("n_max", "must lie in n..=6"));
        }
        if self.k_max == 0 || self.k_max > 4 {
            return Err(bad("k_max", "must lie in 1..=4"));
        }
        for (key, v) in [("max_points", self.max_points), ("jets", self.jets), ("points", self.points), ("grid", self.grid), ("samples", self.samples)] {
            if v == 0 {
                return Err(bad(key, "must be at least 1"));
            }
        }
        Ok(())
    }

    /// `levels`, or `h` alone.
    pub fn level_list(&self) -> Vec<f64> {
        if self.levels.is_empty() {
            vec![self.h]
        } else {
            self.levels.clone()
        }
    }
}
