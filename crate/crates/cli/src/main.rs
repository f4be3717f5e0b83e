mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use spinwire_core::montecarlo::{
    find_first_peak, sweep, write_series_csv, write_sweep_csv, ExperimentConfig, Metric, MetricSeries,
    Protocol, SweepAxis,
};
use spinwire_core::noise::{averaged_spectrum, SpectrumCheck};
use spinwire_core::optctrl::{
    evaluate_pulse_under_disorder, minimal_target_time, optimize_pulse, read_pulse_csv, write_pulse_csv,
    OptimizeOptions, PulseSchedule,
};
use spinwire_core::Error;

use args::{Cli, Command, RunArgs};

/// Failure classes with distinct exit codes.
enum Failure {
    /// Unusable configuration or arguments (exit 2).
    Config(String),
    /// The run itself failed (exit 1).
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_)
            | Error::Parse { .. }
            | Error::Configuration(_)
            | Error::InvalidExponent(_)
            | Error::MemoryGuard { .. }
            | Error::DimensionMismatch { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("spinwire: cannot size thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("spinwire: bad configuration: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("spinwire: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Outcome {
    let started = Instant::now();
    match command {
        Command::Transfer(run) => series_command("transfer", &run, Some(Protocol::Transfer), started),
        Command::Entangle(run) => series_command("entangle", &run, Some(Protocol::Entangle), started),
        Command::Sweep { run, axis, values } => {
            let axis: SweepAxis = axis.parse().map_err(Failure::Config)?;
            sweep_command("sweep", &run, axis, &values, started)
        }
        Command::Thermal { run, values } => sweep_command("thermal", &run, SweepAxis::KT, &values, started),
        Command::Optimize {
            run,
            t_f,
            t_grid,
            threshold,
            k,
            restarts,
            max_iterations,
            bounds,
        } => {
            let implied_t = t_f.unwrap_or(1.0).to_string();
            let Some(cfg) = load_config(&run, None, &[("t_max", &implied_t)])? else {
                return Ok(());
            };
            let opts = OptimizeOptions {
                restarts,
                max_iterations,
                seed: cfg.seed,
                bounds: bounds.as_deref().map(parse_bounds).transpose()?,
                ..Default::default()
            };
            let (t_f, res) = match (t_f, t_grid) {
                (_, Some(grid)) => {
                    minimal_target_time(&cfg.spec, threshold, k, &parse_values(&grid)?, &opts)?
                }
                (Some(t_f), None) => (t_f, optimize_pulse(&cfg.spec, t_f, k, None, &opts)?),
                (None, None) => return Err(Failure::Config("optimize needs --t-f or --t-grid".into())),
            };
            emit(run.out.as_deref(), |w| write_pulse_csv(&res.pulse, w))?;
            summary(
                run.out.is_some(),
                &format!(
                    "optimize: t_f={t_f} k={k} F={:.6} gamma0={:.4} iterations={} grad={:.2e} converged={} wall={:.2}s",
                    res.objective,
                    res.gamma0,
                    res.iterations,
                    res.gradient_norm,
                    res.converged,
                    started.elapsed().as_secs_f64()
                ),
            );
            Ok(())
        }
        Command::EvaluatePulse {
            run,
            pulse,
            t_f,
            bounds,
        } => {
            let Some(cfg) = load_config(&run, None, &[])? else {
                return Ok(());
            };
            let bounds = match bounds {
                Some(b) => parse_bounds(&b)?,
                None => PulseSchedule::default_bounds(cfg.spec.phase, cfg.spec.j_mag),
            };
            let file = File::open(&pulse)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", pulse.display())))?;
            let schedule = read_pulse_csv(file, t_f, bounds)?;
            let series = evaluate_pulse_under_disorder(&schedule, &cfg)?;
            finish_series("evaluate-pulse", &run, &series, started)
        }
        Command::NoiseCheck {
            alpha,
            realizations,
            f_max,
            m,
            samples,
            seed,
            out,
        } => {
            let check = SpectrumCheck {
                alpha,
                realizations,
                f_max,
                m,
                n_samples: samples,
                seed,
            };
            let (spectrum, slope) = averaged_spectrum(&check)?;
            emit(out.as_deref(), |w| {
                let mut csv = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(w);
                csv.write_record(["frequency", "mean_amplitude"])?;
                for (f, a) in spectrum.frequencies.iter().zip(&spectrum.amplitude) {
                    csv.write_record([f.to_string(), a.to_string()])?;
                }
                csv.flush()?;
                Ok(())
            })?;
            let (lo, hi) = check.fit_band();
            summary(
                out.is_some(),
                &format!(
                    "noise-check: alpha={alpha} slope={slope:.4} fit=[{lo}, {hi}] realizations={realizations} wall={:.2}s",
                    started.elapsed().as_secs_f64()
                ),
            );
            Ok(())
        }
    }
}

fn series_command(name: &str, run: &RunArgs, protocol: Option<Protocol>, started: Instant) -> Outcome {
    let Some(cfg) = load_config(run, protocol, &[])? else {
        return Ok(());
    };
    let series = spinwire_core::montecarlo::run_experiment(&cfg)?;
    finish_series(name, run, &series, started)
}

fn finish_series(name: &str, run: &RunArgs, series: &MetricSeries, started: Instant) -> Outcome {
    emit(run.out.as_deref(), |w| write_series_csv(series, w))?;
    let peak = match find_first_peak(series, Metric::Fidelity) {
        Ok(p) => format!(
            "t_opt={} F={:.4}±{:.4} C={:.4}±{:.4}",
            p.t_opt, p.value, p.stderr, series.c_mean[p.index], series.c_stderr[p.index]
        ),
        Err(e) => format!("{e}"),
    };
    summary(
        run.out.is_some(),
        &format!(
            "{name}: {peak} R={} wall={:.2}s",
            series.realizations,
            started.elapsed().as_secs_f64()
        ),
    );
    Ok(())
}

fn sweep_command(name: &str, run: &RunArgs, axis: SweepAxis, values: &str, started: Instant) -> Outcome {
    let values = parse_values(values)?;
    let Some(cfg) = load_config(run, None, &[])? else {
        return Ok(());
    };
    let rows = sweep(&cfg, axis, &values)?;
    emit(run.out.as_deref(), |w| write_sweep_csv(&rows, w))?;
    let best = rows
        .iter()
        .max_by(|a, b| a.f_peak.total_cmp(&b.f_peak))
        .map(|r| format!(" best F={:.4} at {}", r.f_peak, r.axis_value))
        .unwrap_or_default();
    summary(
        run.out.is_some(),
        &format!(
            "{name}: {} points{best} wall={:.2}s",
            rows.len(),
            started.elapsed().as_secs_f64()
        ),
    );
    Ok(())
}

/// Builds the effective configuration: file, then `SPINWIRE_SEED`, then flags.
/// `implied` supplies values only for keys given nowhere else. Returns `None`
/// after printing when `--dump-config` was requested.
fn load_config(
    run: &RunArgs,
    protocol: Option<Protocol>,
    implied: &[(&str, &str)],
) -> Outcome<Option<ExperimentConfig>> {
    let text = match &run.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let seed_env = std::env::var("SPINWIRE_SEED").ok();
    let protocol_text = protocol.map(|p| p.to_string());
    let mut overrides: Vec<(&str, &str, &str)> = Vec::new();
    if let Some(s) = seed_env.as_deref() {
        overrides.push(("seed", s, "SPINWIRE_SEED"));
    }
    if let Some(p) = protocol_text.as_deref() {
        overrides.push(("protocol", p, "subcommand"));
    }
    for (k, v) in run.overrides.pairs() {
        overrides.retain(|(key, _, _)| *key != k);
        overrides.push((k, v, "flag"));
    }
    let merged = merge_config(&text, &overrides, implied);
    match ExperimentConfig::parse(&merged.text) {
        Ok(cfg) => {
            if run.dump_config {
                print!("{}", cfg.dump());
                return Ok(None);
            }
            Ok(Some(cfg))
        }
        Err(Error::Parse { line, key, msg }) if line > merged.file_lines => {
            let origin = merged.origin(line).unwrap_or("flag");
            let shown = if origin == "flag" {
                format!("--{key}")
            } else {
                origin.to_string()
            };
            Err(Failure::Config(format!("{shown}: key `{key}`: {msg}")))
        }
        Err(e) => {
            let prefix = run
                .config
                .as_ref()
                .map(|p| format!("{}: ", p.display()))
                .unwrap_or_default();
            Err(Failure::Config(format!("{prefix}{e}")))
        }
    }
}

struct Merged {
    text: String,
    file_lines: usize,
    origins: Vec<&'static str>,
}

impl Merged {
    fn origin(&self, line: usize) -> Option<&'static str> {
        self.origins.get(line.checked_sub(self.file_lines + 1)?).copied()
    }
}

/// Comments out file lines whose key is overridden (keeping line numbers) and
/// appends the overriding and implied assignments.
fn merge_config(text: &str, overrides: &[(&str, &str, &str)], implied: &[(&str, &str)]) -> Merged {
    let key_of = |line: &str| -> Option<String> {
        let body = line.split('#').next().unwrap_or("");
        body.split_once('=').map(|(k, _)| k.trim().to_string())
    };
    let mut present: Vec<String> = Vec::new();
    let mut out = String::new();
    let mut file_lines = 0;
    for line in text.lines() {
        file_lines += 1;
        match key_of(line) {
            Some(k) if overrides.iter().any(|(o, _, _)| *o == k) => out.push_str("# overridden\n"),
            key => {
                present.extend(key);
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    let mut origins = Vec::new();
    for (k, v, origin) in overrides {
        out.push_str(&format!("{k} = {v}\n"));
        origins.push(match *origin {
            "SPINWIRE_SEED" => "SPINWIRE_SEED",
            "subcommand" => "subcommand",
            _ => "flag",
        });
    }
    for (k, v) in implied {
        if !present.iter().any(|p| p == k) && !overrides.iter().any(|(o, _, _)| o == k) {
            out.push_str(&format!("{k} = {v}\n"));
            origins.push("default");
        }
    }
    Merged {
        text: out,
        file_lines,
        origins,
    }
}

/// `start:stop:step` (inclusive of `stop`) or `a,b,c`.
fn parse_values(spec: &str) -> Outcome<Vec<f64>> {
    let bad = |what: &str| Failure::Config(format!("--values `{spec}`: {what}"));
    let num = |s: &str| -> Outcome<f64> { s.trim().parse().map_err(|_| bad("not a number")) };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad("need start <= stop and step > 0"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * step).collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(bad("expected start:stop:step or a comma-separated list")),
    }
}

fn parse_bounds(spec: &str) -> Outcome<(f64, f64)> {
    let bad = || Failure::Config(format!("--bounds `{spec}`: expected lo:hi"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> spinwire_core::Result<()>) -> Outcome {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

/// The summary goes to stdout unless stdout carries the CSV.
fn summary(to_stdout: bool, line: &str) {
    if to_stdout {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_ranges() {
        let v = match parse_values("0:0.1:0.01") {
            Ok(v) => v,
            Err(_) => panic!(),
        };
        assert_eq!(v.len(), 11);
        assert!((v[10] - 0.1).abs() < 1e-12);
        assert_eq!(parse_values("4,5,6").ok(), Some(vec![4.0, 5.0, 6.0]));
        assert!(parse_values("1:0:0.1").is_err());
        assert!(parse_values("a:b").is_err());
    }

    #[test]
    fn overrides_keep_line_numbers() {
        let m = merge_config(
            "n_channel = 4\nb_nuc = 0.1 # keep\nt_max = 3\n",
            &[("b_nuc", "0.2", "flag")],
            &[("t_max", "9")],
        );
        assert_eq!(m.text, "n_channel = 4\n# overridden\nt_max = 3\nb_nuc = 0.2\n");
        assert_eq!(m.file_lines, 3);
        assert_eq!(m.origin(4), Some("flag"));
    }
}
