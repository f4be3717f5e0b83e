use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::{NoiseKind, NoiseModel};
use crate::spin_model::{ChainSpec, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// Sender qubit sent through the chain; metrics from the reconstructed channel.
    Transfer,
    /// Sender entangled with the ancilla `0′`; metrics from the evolved `ρ_{0′N}`.
    Entangle,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Transfer => "transfer",
            Protocol::Entangle => "entangle",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transfer" => Ok(Protocol::Transfer),
            "entangle" => Ok(Protocol::Entangle),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

/// Everything needed to run one disorder-averaged experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ChainSpec,
    pub protocol: Protocol,
    pub b_nuc: f64,
    pub sigma_j: f64,
    pub alpha: NoiseKind,
    pub kt: f64,
    pub realizations: usize,
    pub t_max: f64,
    pub dt: f64,
    /// Steps between recorded snapshots.
    pub stride: usize,
    pub seed: u64,
    /// Upper frequency of the IDFT noise synthesis.
    pub f_max: f64,
    /// Number of IDFT terms.
    pub idft_m: usize,
}

pub const CONFIG_KEYS: &[&str] = &[
    "n_channel",
    "phase",
    "j_mag",
    "j0_mag",
    "hz",
    "entangle_mode",
    "degeneracy_break",
    "protocol",
    "b_nuc",
    "sigma_j",
    "alpha",
    "kT",
    "realizations",
    "t_max",
    "dt",
    "stride",
    "seed",
    "f_max",
    "idft_m",
];

impl ExperimentConfig {
    pub fn new(spec: ChainSpec, t_max: f64) -> Self {
        Self {
            spec,
            protocol: Protocol::Transfer,
            b_nuc: 0.0,
            sigma_j: 0.0,
            alpha: NoiseKind::Static,
            kt: 0.0,
            realizations: 500,
            t_max,
            dt: 0.05,
            stride: 1,
            seed: 0,
            f_max: 1000.0,
            idft_m: 1 << 14,
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            b_nuc: self.b_nuc,
            sigma_j: self.sigma_j,
            kind: self.alpha,
            f_max: self.f_max,
            idft_m: self.idft_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec
            .validate()
            .map_err(|e| Error::Configuration(e.to_string()))?;
        self.noise_model().validate()?;
        if self.realizations < 1 {
            return Err(Error::Configuration("realizations must be at least 1".into()));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::Configuration("t_max must be positive".into()));
        }
        if !(self.dt > 0.0) || self.dt > self.t_max {
            return Err(Error::Configuration("dt must lie in (0, t_max]".into()));
        }
        if self.stride < 1 {
            return Err(Error::Configuration("stride must be at least 1".into()));
        }
        if !(self.kt >= 0.0) || !self.kt.is_finite() {
            return Err(Error::Configuration("kT must be non-negative".into()));
        }
        if (self.protocol == Protocol::Entangle) != self.spec.entangle_mode {
            return Err(Error::Configuration(
                "entangle_mode must be true exactly when protocol = entangle".into(),
            ));
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment. Keys not listed in
    /// [`CONFIG_KEYS`] are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(ChainSpec::new(1, Phase::Ferro), 1.0);
        let mut seen_entangle = false;
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                key: line.to_string(),
                msg: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&canon) = CONFIG_KEYS.iter().find(|k| **k == key) else {
                return Err(Error::Parse {
                    line: line_no,
                    key: key.into(),
                    msg: "unknown key".into(),
                });
            };
            if seen.contains(&canon) {
                return Err(Error::Parse {
                    line: line_no,
                    key: key.into(),
                    msg: "duplicate key".into(),
                });
            }
            seen.push(canon);
            if canon == "entangle_mode" {
                seen_entangle = true;
            }
            cfg.set(canon, value).map_err(|msg| Error::Parse {
                line: line_no,
                key: key.into(),
                msg,
            })?;
        }
        if !seen.contains(&"n_channel") {
            return Err(Error::Parse {
                line: 0,
                key: "n_channel".into(),
                msg: "required key missing".into(),
            });
        }
        if !seen.contains(&"t_max") {
            return Err(Error::Parse {
                line: 0,
                key: "t_max".into(),
                msg: "required key missing".into(),
            });
        }
        if !seen.contains(&"j0_mag") {
            cfg.spec.j0_mag = cfg.spec.j_mag;
        }
        if !seen_entangle {
            cfg.spec.entangle_mode = cfg.protocol == Protocol::Entangle;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "n_channel" => self.spec.n_channel = num(value)?,
            "phase" => self.spec.phase = value.parse()?,
            "j_mag" => self.spec.j_mag = num(value)?,
            "j0_mag" => self.spec.j0_mag = num(value)?,
            "hz" => self.spec.hz = num(value)?,
            "entangle_mode" => self.spec.entangle_mode = num(value)?,
            "degeneracy_break" => self.spec.degeneracy_break = num(value)?,
            "protocol" => self.protocol = value.parse()?,
            "b_nuc" => self.b_nuc = num(value)?,
            "sigma_j" => self.sigma_j = num(value)?,
            "alpha" => self.alpha = value.parse()?,
            "kT" => self.kt = num(value)?,
            "realizations" => self.realizations = num(value)?,
            "t_max" => self.t_max = num(value)?,
            "dt" => self.dt = num(value)?,
            "stride" => self.stride = num(value)?,
            "seed" => self.seed = num(value)?,
            "f_max" => self.f_max = num(value)?,
            "idft_m" => self.idft_m = num(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Every field as `key = value`, re-parseable by [`Self::parse`].
    pub fn dump(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("n_channel", s.n_channel.to_string());
        kv("phase", s.phase.to_string());
        kv("j_mag", s.j_mag.to_string());
        kv("j0_mag", s.j0_mag.to_string());
        kv("hz", s.hz.to_string());
        kv("entangle_mode", s.entangle_mode.to_string());
        kv("degeneracy_break", s.degeneracy_break.to_string());
        kv("protocol", self.protocol.to_string());
        kv("b_nuc", self.b_nuc.to_string());
        kv("sigma_j", self.sigma_j.to_string());
        kv("alpha", self.alpha.to_string());
        kv("kT", self.kt.to_string());
        kv("realizations", self.realizations.to_string());
        kv("t_max", self.t_max.to_string());
        kv("dt", self.dt.to_string());
        kv("stride", self.stride.to_string());
        kv("seed", self.seed.to_string());
        kv("f_max", self.f_max.to_string());
        kv("idft_m", self.idft_m.to_string());
        out
    }

    /// FNV-1a hash of the canonical dump.
    pub fn hash(&self) -> u64 {
        self.dump().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let mut cfg = ExperimentConfig::new(ChainSpec::new(10, Phase::Antiferro), 20.0);
        cfg.b_nuc = 0.05;
        cfg.sigma_j = 0.1;
        cfg.alpha = NoiseKind::Colored(1.0);
        cfg.kt = 0.3;
        cfg.seed = 17;
        cfg.spec.degeneracy_break = 1e-6;
        let back = ExperimentConfig::parse(&cfg.dump()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn parse_with_comments_and_defaults() {
        let text = "# chain\nn_channel = 4\nphase = FM # ferro\nt_max = 5\nj_mag = 2\n\nalpha = white\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.spec.n_channel, 4);
        assert_eq!(cfg.spec.phase, Phase::Ferro);
        assert_eq!(cfg.spec.j0_mag, 2.0);
        assert_eq!(cfg.alpha, NoiseKind::White);
        assert_eq!(cfg.realizations, 500);
        assert_eq!(cfg.dt, 0.05);
    }

    #[test]
    fn entangle_protocol_enables_ancilla() {
        let cfg = ExperimentConfig::parse("n_channel = 2\nt_max = 1\nprotocol = entangle\n").unwrap();
        assert!(cfg.spec.entangle_mode);
        assert!(ExperimentConfig::parse(
            "n_channel = 2\nt_max = 1\nprotocol = entangle\nentangle_mode = false\n"
        )
        .is_err());
    }

    #[test]
    fn bad_input_names_the_key() {
        match ExperimentConfig::parse("n_channel = 2\nt_max = 1\nbogus = 3\n") {
            Err(Error::Parse { line, key, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "bogus");
            }
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("n_channel = two\nt_max = 1\n") {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "n_channel"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("t_max = 1\n").is_err());
        assert!(ExperimentConfig::parse("n_channel = 2\nt_max = 1\nrealizations = 0\n").is_err());
    }
}
