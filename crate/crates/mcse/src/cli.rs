//! Command-line front end. Exit codes: 0 success, 1 usage error, 2
//! runtime or numerical error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::commands;
use crate::config::{self, parse_assignment};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "mcse", version, about = "Multichannel speech enhancement toolkit")]
struct Cli {
    /// Worker threads for per-scene work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate shoebox RIRs (explicit room or random scenes).
    SimulateRir(SimulateRirArgs),
    /// Synthesize spatialized mixtures and a manifest.
    SynthDataset(SynthDatasetArgs),
    /// Run an oracle beamformer or the Taylor pipeline over a manifest.
    Beamform(BeamformArgs),
    /// Score system outputs against the anechoic targets.
    Evaluate(EvaluateArgs),
    /// Export a beampattern as CSV.
    Beampattern(BeampatternArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file with flat keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set t60_range=[0.2,0.4]`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, Value)>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateRirArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// Explicit room dimensions `x,y,z` in metres.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    room_dims: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    source_pos: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    array_center: Option<Vec<f64>>,
    #[arg(long)]
    t60: Option<f64>,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    rir_len: Option<usize>,
    #[arg(long)]
    fractional_delay_taps: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthDatasetArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    speech_dir: Option<PathBuf>,
    #[arg(long)]
    noise_dir: Option<PathBuf>,
    /// Four shares for the 0-15, 15-45, 45-90 and 90-180 degree bins.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    doa_bin_proportions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BeamformArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// ti-mvdr, ti-mwf, frame-mvdr or taylor.
    #[arg(long)]
    mode: Option<String>,
    /// eigenvector or direct-path.
    #[arg(long)]
    rtf: Option<String>,
    #[arg(long)]
    q: Option<usize>,
    /// exact, literal, finite-difference or external.
    #[arg(long)]
    operator: Option<String>,
    #[arg(long)]
    loading: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    external_operator: Option<PathBuf>,
    #[arg(long)]
    dump_weights: bool,
    #[arg(long)]
    dump_terms: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    outputs: Option<PathBuf>,
    /// Score the unprocessed reference channel.
    #[arg(long)]
    noisy: bool,
    #[arg(long)]
    seg_frame_ms: Option<f64>,
}

#[derive(Debug, Args)]
struct BeampatternArgs {
    #[command(flatten)]
    common: Common,
    /// Weight dump written by `beamform --dump-weights`.
    #[arg(long)]
    weights_file: Option<PathBuf>,
    /// mvdr, delay-and-sum or reference (when no weights file is given).
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    target_doa_deg: Option<f64>,
    #[arg(long)]
    interferer_doa_deg: Option<f64>,
    #[arg(long)]
    angle_step_deg: Option<f64>,
    #[arg(long)]
    freq_step_hz: Option<f64>,
    #[arg(long)]
    frame: Option<usize>,
}

struct Overrides(Map<String, Value>);

impl Overrides {
    fn new(common: &Common) -> Self {
        let mut map: Map<String, Value> = common.set.iter().cloned().collect();
        if let Some(dir) = &common.output_dir {
            map.insert("output_dir".into(), Value::String(dir.display().to_string()));
        }
        Overrides(map)
    }

    fn put<T: Serialize>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
        }
    }

    fn flag(&mut self, key: &str, on: bool) {
        if on {
            self.0.insert(key.to_string(), Value::Bool(true));
        }
    }
}

fn done(lines: impl IntoIterator<Item = String>) {
    for l in lines {
        println!("{l}");
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::SimulateRir(a) => {
            let mut o = Overrides::new(&a.common);
            o.put("seed", &a.seed);
            o.put("count", &a.count);
            o.put("room_dims", &a.room_dims);
            o.put("source_pos", &a.source_pos);
            o.put("array_center", &a.array_center);
            o.put("t60", &a.t60);
            o.put("max_order", &a.max_order);
            o.put("rir_len", &a.rir_len);
            o.put("fractional_delay_taps", &a.fractional_delay_taps);
            let cfg: config::SimulateRirConfig = config::resolve(a.common.config.as_deref(), o.0)?;
            cfg.validate()?;
            let paths = commands::simulate_rir(&cfg)?;
            done(paths.iter().map(|p| p.display().to_string()));
        }
        Command::SynthDataset(a) => {
            let mut o = Overrides::new(&a.common);
            o.put("seed", &a.seed);
            o.put("count", &a.count);
            o.put("duration_s", &a.duration_s);
            o.put("speech_dir", &a.speech_dir);
            o.put("noise_dir", &a.noise_dir);
            o.put("doa_bin_proportions", &a.doa_bin_proportions);
            let cfg: config::SynthDatasetConfig = config::resolve(a.common.config.as_deref(), o.0)?;
            cfg.validate()?;
            let manifest = commands::synth_dataset(&cfg)?;
            done([format!(
                "{} scenes, manifest {}",
                manifest.entries.len(),
                manifest.base_dir.join(crate::manifest::MANIFEST_FILE).display()
            )]);
        }
        Command::Beamform(a) => {
            let mut o = Overrides::new(&a.common);
            o.put("manifest", &a.manifest);
            o.put("mode", &a.mode);
            o.put("rtf", &a.rtf);
            o.put("q", &a.q);
            o.put("operator", &a.operator);
            o.put("loading", &a.loading);
            o.put("lambda", &a.lambda);
            o.put("external_operator", &a.external_operator);
            o.flag("dump_weights", a.dump_weights);
            o.flag("dump_terms", a.dump_terms);
            let cfg: config::BeamformConfig = config::resolve(a.common.config.as_deref(), o.0)?;
            cfg.validate()?;
            let records = commands::beamform(&cfg)?;
            done([format!("{} utterances enhanced into {}", records.len(), cfg.output_dir.display())]);
        }
        Command::Evaluate(a) => {
            let mut o = Overrides::new(&a.common);
            o.put("manifest", &a.manifest);
            o.put("outputs", &a.outputs);
            o.flag("noisy", a.noisy);
            o.put("seg_frame_ms", &a.seg_frame_ms);
            let cfg: config::EvaluateConfig = config::resolve(a.common.config.as_deref(), o.0)?;
            cfg.validate()?;
            let report = commands::evaluate(&cfg)?;
            let mean = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2} dB"));
            let mut lines = vec![format!(
                "{} utterances: SI-SDR {}, segmental SNR {}",
                report.global.count,
                mean(report.global.mean_si_sdr_db),
                mean(report.global.mean_seg_snr_db)
            )];
            for b in &report.per_bin {
                lines.push(format!("  {:>6}: n={} SI-SDR {}", b.doa_bin.label(), b.summary.count, mean(b.summary.mean_si_sdr_db)));
            }
            done(lines);
        }
        Command::Beampattern(a) => {
            let mut o = Overrides::new(&a.common);
            o.put("weights_file", &a.weights_file);
            o.put("weights", &a.weights);
            o.put("target_doa_deg", &a.target_doa_deg);
            o.put("interferer_doa_deg", &a.interferer_doa_deg);
            o.put("angle_step_deg", &a.angle_step_deg);
            o.put("freq_step_hz", &a.freq_step_hz);
            o.put("frame", &a.frame);
            let cfg: config::BeampatternConfig = config::resolve(a.common.config.as_deref(), o.0)?;
            cfg.validate()?;
            let path = commands::beampattern_csv(&cfg)?;
            done([path.display().to_string()]);
        }
    }
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: --jobs: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
