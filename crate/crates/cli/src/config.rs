//! INI-style experiment configuration.
//!
//! ```text
//! [graph]
//! kind = ring            # path | ring | complete | erdos_renyi | file
//! nodes = 4
//! [data]
//! kind = synthetic       # synthetic | file
//! rows = 20              # per node, or one value per node
//! features = 3
//! [schedule]
//! c_alpha = 1            # comma-separated lists are swept by `dplr sweep`
//! ...
//! [omega]
//! radius = 5             # `inf` disables projection
//! [run]
//! rounds = 100
//! ```
//!
//! The canonical form sorts sections and keys, lowercases both and trims
//! values; its SHA-256 is the config hash stamped on every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dplr_core::ScheduleParams;
use sha2::{Digest, Sha256};

/// Section -> key -> value, already canonicalized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                ini.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", idx + 1))?;
            let section = current
                .as_ref()
                .ok_or_else(|| anyhow!("config line {}: key outside of a section", idx + 1))?;
            let key = key.trim().to_ascii_lowercase();
            let entries = ini.sections.get_mut(section).expect("section exists");
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("config line {}: duplicate key `{key}` in [{section}]", idx + 1);
            }
        }
        Ok(ini)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_ascii_lowercase())
            .or_default()
            .insert(key.to_ascii_lowercase(), value.into().trim().to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.get(section, key)
            .map(|v| {
                v.parse()
                    .map_err(|_| anyhow!("[{section}] {key}: cannot parse {v:?}"))
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.parsed(section, key)?
            .ok_or_else(|| anyhow!("[{section}] {key} is required"))
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        self.get(section, key)
            .map(|v| {
                v.split(',')
                    .map(|t| {
                        t.trim()
                            .parse()
                            .map_err(|_| anyhow!("[{section}] {key}: cannot parse {t:?}"))
                    })
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Path(usize),
    Ring(usize),
    Complete(usize),
    ErdosRenyi { nodes: usize, p: f64, seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Synthetic {
        rows: Vec<usize>,
        features: usize,
        design_norm: f64,
        label_noise: f64,
        ground_truth: Option<Vec<f64>>,
        latent_rank: Option<usize>,
        seed: u64,
    },
    File(PathBuf),
}

/// Each schedule key may list several values; the sweep takes their product.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleGrid {
    pub c_alpha: Vec<f64>,
    pub d_alpha: Vec<f64>,
    pub e_alpha: Vec<f64>,
    pub c_v: Vec<f64>,
    pub d_v: Vec<f64>,
    pub e_v: Vec<f64>,
}

impl ScheduleGrid {
    pub fn points(&self) -> Vec<[f64; 6]> {
        let axes = [
            &self.c_alpha,
            &self.d_alpha,
            &self.e_alpha,
            &self.c_v,
            &self.d_v,
            &self.e_v,
        ];
        let mut points = vec![[0.0; 6]];
        for (slot, axis) in axes.iter().enumerate() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p;
                        q[slot] = v;
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// The single point of a non-swept schedule.
    pub fn single(&self) -> Result<ScheduleParams> {
        let points = self.points();
        if points.len() != 1 {
            bail!("[schedule] lists several values; use `dplr sweep`");
        }
        to_params(points[0])
    }
}

pub fn to_params(p: [f64; 6]) -> Result<ScheduleParams> {
    Ok(ScheduleParams::new(p[0], p[1], p[2], p[3], p[4], p[5])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Same data: realized losses are exactly zero.
    Identical,
    NegateLabels,
    NegateDesign,
    /// Reverse the order of the labels, keeping the design.
    ReverseLabels,
    ZeroLabels,
}

impl std::str::FromStr for Perturbation {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identical" => Self::Identical,
            "negate-labels" => Self::NegateLabels,
            "negate-design" => Self::NegateDesign,
            "reverse-labels" => Self::ReverseLabels,
            "zero-labels" => Self::ZeroLabels,
            other => bail!(
                "unknown perturbation {other:?} (identical, negate-labels, negate-design, reverse-labels, zero-labels)"
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSpec {
    pub fit: (usize, usize),
    pub test: (usize, usize),
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub data: DataSpec,
    pub schedule: ScheduleGrid,
    pub omega_radius: f64,
    pub omega_center: Option<Vec<f64>>,
    pub rounds: usize,
    pub trials: usize,
    pub seed: u64,
    pub noise: bool,
    pub output_dir: Option<PathBuf>,
    pub baseline_threshold: Option<f64>,
    pub audit_node: usize,
    pub perturbation: Perturbation,
    pub envelope: Option<EnvelopeSpec>,
    pub hash: String,
}

impl ExperimentConfig {
    /// Relative file paths are resolved against `base` (the config's directory).
    pub fn from_ini(ini: &Ini, base: &Path) -> Result<Self> {
        let seed: u64 = ini.parsed("run", "seed")?.unwrap_or(0);
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let graph = match ini.get("graph", "kind").unwrap_or("path") {
            "path" => GraphSpec::Path(ini.required("graph", "nodes")?),
            "ring" => GraphSpec::Ring(ini.required("graph", "nodes")?),
            "complete" => GraphSpec::Complete(ini.required("graph", "nodes")?),
            "erdos_renyi" => GraphSpec::ErdosRenyi {
                nodes: ini.required("graph", "nodes")?,
                p: ini.required("graph", "p")?,
                seed: ini.parsed("graph", "seed")?.unwrap_or(seed),
            },
            "file" => GraphSpec::File(resolve(
                ini.get("graph", "file")
                    .ok_or_else(|| anyhow!("[graph] file is required"))?,
            )),
            other => bail!("[graph] unknown kind {other:?}"),
        };

        let data = match ini.get("data", "kind").unwrap_or("synthetic") {
            "synthetic" => DataSpec::Synthetic {
                rows: ini
                    .list("data", "rows")?
                    .ok_or_else(|| anyhow!("[data] rows is required"))?,
                features: ini.required("data", "features")?,
                design_norm: ini.parsed("data", "design_norm")?.unwrap_or(1.0),
                label_noise: ini.parsed("data", "label_noise")?.unwrap_or(0.1),
                ground_truth: ini.list("data", "ground_truth")?,
                latent_rank: ini.parsed("data", "latent_rank")?,
                seed: ini.parsed("data", "seed")?.unwrap_or(seed),
            },
            "file" => DataSpec::File(resolve(
                ini.get("data", "file")
                    .ok_or_else(|| anyhow!("[data] file is required"))?,
            )),
            other => bail!("[data] unknown kind {other:?}"),
        };

        let axis = |key: &str| -> Result<Vec<f64>> {
            ini.list("schedule", key)?
                .ok_or_else(|| anyhow!("[schedule] {key} is required"))
        };
        let schedule = ScheduleGrid {
            c_alpha: axis("c_alpha")?,
            d_alpha: axis("d_alpha")?,
            e_alpha: axis("e_alpha")?,
            c_v: axis("c_v")?,
            d_v: axis("d_v")?,
            e_v: axis("e_v")?,
        };

        let noise = match ini.get("run", "noise").unwrap_or("laplace") {
            "laplace" => true,
            "off" => false,
            other => bail!("[run] noise must be `laplace` or `off`, got {other:?}"),
        };

        let envelope = if ini.has_section("envelope") {
            Some(EnvelopeSpec {
                fit: (
                    ini.required("envelope", "fit_start")?,
                    ini.required("envelope", "fit_end")?,
                ),
                test: (
                    ini.required("envelope", "test_start")?,
                    ini.required("envelope", "test_end")?,
                ),
                slack: ini.parsed("envelope", "slack")?.unwrap_or(2.0),
            })
        } else {
            None
        };

        Ok(Self {
            graph,
            data,
            schedule,
            omega_radius: ini.required("omega", "radius")?,
            omega_center: ini.list("omega", "center")?,
            rounds: ini.required("run", "rounds")?,
            trials: ini.parsed("run", "trials")?.unwrap_or(1),
            seed,
            noise,
            output_dir: ini.get("run", "output_dir").map(resolve),
            baseline_threshold: ini.parsed("run", "baseline_threshold")?,
            audit_node: ini.parsed("audit", "node")?.unwrap_or(1),
            perturbation: ini
                .parsed("audit", "perturb")?
                .unwrap_or(Perturbation::NegateLabels),
            envelope,
            hash: ini.hash(),
        })
    }
}

pub fn load_ini(path: &Path) -> Result<Ini> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ini::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
[graph]
kind = path
nodes = 3
[data]
rows = 4
features = 2
[schedule]
c_alpha = 0.5
d_alpha = 2
e_alpha = 1
c_v = 1
d_v = 1
e_v = 1
[omega]
radius = 2
[run]
rounds = 10
";

    #[test]
    fn hash_ignores_layout_and_key_case() {
        let a = Ini::parse(BASE).unwrap();
        let shuffled = "[RUN]\n  Rounds=10   # ten\n[omega]\nradius=2\n[schedule]\ne_v=1\nd_v=1\nc_v=1\ne_alpha=1\nd_alpha=2\nc_alpha=0.5\n[data]\nfeatures=2\nrows=4\n[graph]\nnodes=3\nkind=path\n";
        let b = Ini::parse(shuffled).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.set("run", "rounds", "11");
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn parses_typed_config() {
        let cfg = ExperimentConfig::from_ini(&Ini::parse(BASE).unwrap(), Path::new(".")).unwrap();
        assert_eq!(cfg.graph, GraphSpec::Path(3));
        assert_eq!(cfg.trials, 1);
        assert!(cfg.noise);
        assert_eq!(cfg.schedule.single().unwrap().d_alpha, 2.0);
    }

    #[test]
    fn grid_is_cartesian() {
        let mut ini = Ini::parse(BASE).unwrap();
        ini.set("schedule", "c_alpha", "0.1, 0.2");
        ini.set("schedule", "e_v", "0.5,0.75,1");
        let cfg = ExperimentConfig::from_ini(&ini, Path::new(".")).unwrap();
        let points = cfg.schedule.points();
        assert_eq!(points.len(), 6);
        assert_eq!(points[0], [0.1, 2.0, 1.0, 1.0, 1.0, 0.5]);
        assert_eq!(points[5], [0.2, 2.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(cfg.schedule.single().is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Ini::parse("key = 1\n").is_err());
        assert!(Ini::parse("[a]\nnovalue\n").is_err());
        assert!(Ini::parse("[a]\nk=1\nk=2\n").is_err());
    }
}
