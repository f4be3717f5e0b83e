use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "spinwire",
    version,
    about = "Spin-chain state transfer under hyperfine and exchange disorder"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Disorder-averaged transfer of the sender qubit; writes the metric series.
    Transfer(RunArgs),
    /// Transfer of half of a singlet with the ancilla; writes the metric series.
    Entangle(RunArgs),
    /// First-peak metrics along one parameter axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// b_nuc, sigma_j, N or kT.
        #[arg(long)]
        axis: String,
        /// `start:stop:step` (inclusive) or a comma-separated list.
        #[arg(long)]
        values: String,
    },
    /// First-peak metrics versus temperature kT.
    Thermal {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "0:1:0.1")]
        values: String,
    },
    /// Optimize a piecewise-constant boundary pulse on the noiseless chain.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
        /// Target time; required unless --t-grid is given.
        #[arg(long = "t-f")]
        t_f: Option<f64>,
        /// Candidate target times searched in order for the smallest one reaching --threshold.
        #[arg(long = "t-grid")]
        t_grid: Option<String>,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 500)]
        max_iterations: usize,
        /// Amplitude bounds `lo:hi`.
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
    },
    /// Disorder-averaged series under a fixed pulse read from a pulse CSV.
    EvaluatePulse {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        pulse: PathBuf,
        /// Needed only for single-segment pulse files.
        #[arg(long = "t-f")]
        t_f: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
    },
    /// Averaged amplitude spectrum of synthesized coupling noise.
    NoiseCheck {
        /// Spectral exponent.
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        realizations: usize,
        #[arg(long, default_value_t = 1000.0)]
        f_max: f64,
        #[arg(long, default_value_t = 16384)]
        m: usize,
        #[arg(long, default_value_t = 8192)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// `key = value` experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// One flag per configuration key; each replaces the file's value.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    #[arg(long = "n_channel", value_name = "N")]
    pub n_channel: Option<String>,
    #[arg(long = "phase", value_name = "FM|AFM")]
    pub phase: Option<String>,
    #[arg(long = "j_mag", value_name = "J")]
    pub j_mag: Option<String>,
    #[arg(long = "j0_mag", value_name = "J0")]
    pub j0_mag: Option<String>,
    #[arg(long = "hz", value_name = "FIELD", allow_hyphen_values = true)]
    pub hz: Option<String>,
    #[arg(long = "entangle_mode", value_name = "BOOL")]
    pub entangle_mode: Option<String>,
    #[arg(long = "degeneracy_break", value_name = "FIELD", allow_hyphen_values = true)]
    pub degeneracy_break: Option<String>,
    #[arg(long = "protocol", value_name = "transfer|entangle")]
    pub protocol: Option<String>,
    #[arg(long = "b_nuc", value_name = "B")]
    pub b_nuc: Option<String>,
    #[arg(long = "sigma_j", value_name = "SIGMA")]
    pub sigma_j: Option<String>,
    #[arg(long = "alpha", value_name = "static|white|EXP")]
    pub alpha: Option<String>,
    #[arg(long = "kT", value_name = "KT")]
    pub kt: Option<String>,
    #[arg(long = "realizations", value_name = "R")]
    pub realizations: Option<String>,
    #[arg(long = "t_max", value_name = "T")]
    pub t_max: Option<String>,
    #[arg(long = "dt", value_name = "DT")]
    pub dt: Option<String>,
    #[arg(long = "stride", value_name = "STEPS")]
    pub stride: Option<String>,
    #[arg(long = "seed", value_name = "SEED")]
    pub seed: Option<String>,
    #[arg(long = "f_max", value_name = "F")]
    pub f_max: Option<String>,
    #[arg(long = "idft_m", value_name = "M")]
    pub idft_m: Option<String>,
}

impl Overrides {
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all: [(&'static str, &Option<String>); 19] = [
            ("n_channel", &self.n_channel),
            ("phase", &self.phase),
            ("j_mag", &self.j_mag),
            ("j0_mag", &self.j0_mag),
            ("hz", &self.hz),
            ("entangle_mode", &self.entangle_mode),
            ("degeneracy_break", &self.degeneracy_break),
            ("protocol", &self.protocol),
            ("b_nuc", &self.b_nuc),
            ("sigma_j", &self.sigma_j),
            ("alpha", &self.alpha),
            ("kT", &self.kt),
            ("realizations", &self.realizations),
            ("t_max", &self.t_max),
            ("dt", &self.dt),
            ("stride", &self.stride),
            ("seed", &self.seed),
            ("f_max", &self.f_max),
            ("idft_m", &self.idft_m),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}
