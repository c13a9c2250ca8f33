use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hardy_core::coverings::{
    box_product, covering_bessel, covering_laguerre, covering_strip, covering_uniform, Generator,
};
use hardy_core::geometry::Bounds;
use hardy_core::kernels::{KernelFamily, Potential, SchrodingerConfig};
use hardy_core::quadrature::SpatialConfig;
use hardy_core::verifier::{CuboidSelection, VerifierConfig};
use hardy_core::{AdmissibleCovering, Cuboid, DomainSpec, Interval};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub kernel: KernelSpec,
    pub covering: CoveringSpec,
    pub verify: VerifySpec,
    pub quadrature: QuadratureSpec,
    pub maximal: MaximalSpec,
    pub decompose: DecomposeSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    /// euclidean-heat | stable | bessel | laguerre | schrodinger | product
    pub kind: String,
    pub beta: f64,
    pub alpha: f64,
    pub nu: f64,
    pub dim: usize,
    /// zero | constant | harmonic
    pub potential: String,
    pub potential_value: f64,
    pub half_width: f64,
    pub n_points: usize,
    /// Subordinate the kernel with this index in (0, 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subordinate: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<KernelSpec>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: "bessel".into(),
            beta: 1.0,
            alpha: 0.5,
            nu: 0.5,
            dim: 1,
            potential: "zero".into(),
            potential_value: 1.0,
            half_width: 20.0,
            n_points: 2000,
            subordinate: None,
            factors: Vec::new(),
        }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelFamily> {
        let k = match self.kind.as_str() {
            "euclidean-heat" | "heat" => KernelFamily::euclidean_heat(self.dim),
            "stable" => KernelFamily::stable(self.nu, self.dim)?,
            "bessel" => KernelFamily::bessel(self.beta)?,
            "laguerre" => KernelFamily::laguerre(self.alpha)?,
            "schrodinger" => {
                let v = match self.potential.as_str() {
                    "zero" => Potential::Zero,
                    "constant" => Potential::Constant(self.potential_value),
                    "harmonic" => Potential::Harmonic,
                    other => bail!("unknown potential {other:?}"),
                };
                let cfg = SchrodingerConfig {
                    half_width: self.half_width,
                    n_points: self.n_points,
                };
                KernelFamily::schrodinger(v, cfg)?
            }
            "product" => {
                if self.factors.is_empty() {
                    bail!("product kernel needs [[kernel.factors]]");
                }
                let fs = self
                    .factors
                    .iter()
                    .map(|f| f.build())
                    .collect::<Result<Vec<_>>>()?;
                KernelFamily::product(fs)?
            }
            other => bail!("unknown kernel kind {other:?}"),
        };
        match self.subordinate {
            Some(nu) => Ok(KernelFamily::subordinate(k, nu)?),
            None => Ok(k),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CoveringSpec {
    /// bessel | laguerre | uniform | bessel-box | laguerre-box |
    /// bessel-laguerre-box | strip | custom
    pub family: String,
    /// Index range for dyadic families, coordinate range for uniform ones.
    pub window: [f64; 2],
    pub kappa: f64,
    pub tau: f64,
    pub dim: usize,
    pub reach: u32,
    /// Coverage probes for validation.
    pub samples: usize,
    pub log_axes: bool,
    /// Custom cuboids as `[lo_1, hi_1, lo_2, hi_2, ...]`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cuboids: Vec<Vec<f64>>,
    /// euclidean | half-line, for custom coverings.
    pub domain: String,
    pub c1: f64,
    pub c2: f64,
}

impl Default for CoveringSpec {
    fn default() -> Self {
        CoveringSpec {
            family: "bessel".into(),
            window: [-3.0, 3.0],
            kappa: 1.05,
            tau: 1.0,
            dim: 1,
            reach: 2,
            samples: 4000,
            log_axes: false,
            cuboids: Vec::new(),
            domain: "half-line".into(),
            c1: 1.0,
            c2: 2.0,
        }
    }
}

impl CoveringSpec {
    fn index_window(&self) -> Result<(i32, i32)> {
        let [a, b] = self.window;
        if a.fract() != 0.0 || b.fract() != 0.0 || a > b {
            bail!("dyadic families need an integer window lo..hi, got {a}..{b}");
        }
        Ok((a as i32, b as i32))
    }

    pub fn build(&self) -> Result<AdmissibleCovering> {
        if !(self.kappa > 1.0 && self.kappa <= 1.1) {
            bail!("kappa must lie in (1, 1.1], got {}", self.kappa);
        }
        let c = match self.family.as_str() {
            "bessel" => {
                let (lo, hi) = self.index_window()?;
                covering_bessel(lo, hi)?
            }
            "laguerre" => {
                let (lo, hi) = self.index_window()?;
                covering_laguerre(lo, hi)?
            }
            "uniform" => {
                let w = vec![Interval::new(self.window[0], self.window[1]); self.dim];
                covering_uniform(DomainSpec::euclidean(self.dim), self.tau, &w)?
            }
            "bessel-box" | "laguerre-box" | "bessel-laguerre-box" => {
                let (lo, hi) = self.index_window()?;
                let (a, b) = match self.family.as_str() {
                    "bessel-box" => (covering_bessel(lo, hi)?, covering_bessel(lo, hi)?),
                    "laguerre-box" => (covering_laguerre(lo, hi)?, covering_laguerre(lo, hi)?),
                    _ => (covering_bessel(lo, hi)?, covering_laguerre(lo, hi)?),
                };
                box_product(&a, &b, hardy_core::coverings::DEFAULT_SPLIT_BUDGET)?
            }
            "strip" => {
                let (lo, hi) = self.index_window()?;
                covering_strip(self.dim, self.reach, &covering_bessel(lo, hi)?)?
            }
            "custom" => self.custom()?,
            other => bail!("unknown covering family {other:?}"),
        };
        Ok(c.with_kappa(self.kappa))
    }

    fn custom(&self) -> Result<AdmissibleCovering> {
        let first = self
            .cuboids
            .first()
            .ok_or_else(|| anyhow!("custom covering needs cuboids"))?;
        if first.len() % 2 != 0 || first.is_empty() {
            bail!("custom cuboids are [lo_1, hi_1, ...] lists");
        }
        let d = first.len() / 2;
        let mut cuboids = Vec::new();
        for (i, row) in self.cuboids.iter().enumerate() {
            if row.len() != 2 * d {
                bail!(
                    "custom cuboid {i} has {} numbers, expected {}",
                    row.len(),
                    2 * d
                );
            }
            let b: Bounds = row.chunks(2).map(|p| Interval::new(p[0], p[1])).collect();
            cuboids.push(Cuboid::from_bounds(&b).with_context(|| format!("custom cuboid {i}"))?);
        }
        let window: Bounds = (0..d)
            .map(|j| {
                let lo = cuboids
                    .iter()
                    .map(|q| q.bounds()[j].lo)
                    .fold(f64::INFINITY, f64::min);
                let hi = cuboids
                    .iter()
                    .map(|q| q.bounds()[j].hi)
                    .fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            })
            .collect();
        let domain = match self.domain.as_str() {
            "euclidean" => DomainSpec::euclidean(d),
            "half-line" => DomainSpec::new(vec![Interval::new(0.0, f64::INFINITY); d])?,
            other => bail!("unknown domain {other:?}"),
        };
        Ok(AdmissibleCovering::new(
            domain,
            cuboids,
            window,
            self.c1,
            self.c2,
            Generator::Custom("custom".into()),
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    /// Any of A0, A0', A1', A2', A1, A2, a3, a4, D', K, limits, envelope.
    pub conditions: Vec<String>,
    pub gamma: f64,
    /// Exponent in the (A0') envelope.
    pub nu: f64,
    pub rho_target: f64,
    pub sigma_target: f64,
    pub mass_doublings: usize,
    /// interior | all | indices
    pub selection: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub indices: Vec<usize>,
    pub envelope_probes: usize,
    pub limit_points: Vec<f64>,
    pub limit_radii: Vec<f64>,
    pub sample_doubling: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            conditions: vec!["A0'".into(), "A1'".into(), "A2'".into()],
            gamma: 0.2,
            nu: 0.5,
            rho_target: 2.0,
            sigma_target: 0.5,
            mass_doublings: 4,
            selection: "interior".into(),
            indices: Vec::new(),
            envelope_probes: 10_000,
            limit_points: vec![1.0],
            limit_radii: vec![0.1, 0.5],
            sample_doubling: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub points_per_decade: usize,
    pub interior_samples: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_leaves: usize,
    pub window_factor: f64,
    pub probes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        let v = VerifierConfig::default();
        QuadratureSpec {
            points_per_decade: v.points_per_decade,
            interior_samples: v.interior_samples,
            rel_tol: v.spatial.rel_tol,
            abs_tol: v.spatial.abs_tol,
            max_leaves: v.spatial.max_leaves,
            window_factor: v.spatial.window_factor,
            probes: v.probes,
        }
    }
}

impl QuadratureSpec {
    pub fn spatial(&self) -> SpatialConfig {
        SpatialConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_leaves: self.max_leaves,
            window_factor: self.window_factor,
            ..SpatialConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MaximalSpec {
    pub atoms_per_cuboid: usize,
    pub noise_cells: usize,
    pub points_per_decade: usize,
    pub rel_tol: f64,
}

impl Default for MaximalSpec {
    fn default() -> Self {
        MaximalSpec {
            atoms_per_cuboid: 4,
            noise_cells: hardy_core::atoms::DEFAULT_NOISE_CELLS,
            points_per_decade: 8,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeSpec {
    pub depth: usize,
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

impl Default for DecomposeSpec {
    fn default() -> Self {
        DecomposeSpec {
            depth: 6,
            grid_points: hardy_core::atoms::DEFAULT_GRID_POINTS,
            input: None,
        }
    }
}

impl CampaignConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(CampaignConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    /// Resolved configuration without the output directory, as TOML.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        toml::to_string(&c).unwrap_or_default()
    }

    /// Short digest of the resolved configuration plus extra parameters.
    pub fn params_hash(&self, extra: &[(String, String)]) -> String {
        let mut h = Sha256::new();
        h.update(self.echo().as_bytes());
        for (k, v) in extra {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn verifier(&self) -> Result<VerifierConfig> {
        let selection = match self.verify.selection.as_str() {
            "interior" => CuboidSelection::Interior,
            "all" => CuboidSelection::All,
            "indices" => CuboidSelection::Indices(self.verify.indices.clone()),
            other => bail!("unknown cuboid selection {other:?}"),
        };
        Ok(VerifierConfig {
            points_per_decade: self.quadrature.points_per_decade,
            interior_samples: self.quadrature.interior_samples,
            spatial: self.quadrature.spatial(),
            selection,
            probes: self.quadrature.probes,
        })
    }
}

/// `"a..b"` as a pair of numbers.
pub fn parse_window(s: &str) -> Result<[f64; 2]> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| anyhow!("window must look like lo..hi, got {s:?}"))?;
    let lo: f64 = a
        .trim()
        .parse()
        .with_context(|| format!("window start {a:?}"))?;
    let hi: f64 = b
        .trim()
        .parse()
        .with_context(|| format!("window end {b:?}"))?;
    if !(lo < hi) && !(lo == hi && lo.fract() == 0.0) {
        bail!("empty window {s:?}");
    }
    Ok([lo, hi])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = CampaignConfig::default();
        let back: CampaignConfig = toml::from_str(&c.echo()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn window_parsing() {
        assert_eq!(parse_window("-3..3").unwrap(), [-3.0, 3.0]);
        assert_eq!(parse_window("0..2").unwrap(), [0.0, 2.0]);
        assert!(parse_window("3").is_err());
        assert!(parse_window("2..1").is_err());
    }

    #[test]
    fn hash_tracks_parameters() {
        let c = CampaignConfig::default();
        let a = c.params_hash(&[("delta".into(), "0".into())]);
        let b = c.params_hash(&[("delta".into(), "0.1".into())]);
        assert_ne!(a, b);
        assert_eq!(a.len(), 16);
        let mut d = c.clone();
        d.output = Some("elsewhere".into());
        assert_eq!(d.params_hash(&[("delta".into(), "0".into())]), a);
    }
}
