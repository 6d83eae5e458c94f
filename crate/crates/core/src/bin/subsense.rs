use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use subsense::analysis::{
    discriminative_substitutes, relation_distribution, substitute_language_share, top_n_pairs,
    Script, TaxonomyGraph,
};
use subsense::gateway::{serve_connection, serve_tcp, MockBackend};
use subsense::pipeline::{self, Error, RunConfig};
use subsense::substgen::{SubstituteRecord, SubstituteSet};
use subsense::vectorize::lemmatize_set;
use subsense::wcm::{wcm_prep_corpus, ReplacementSplit, WcmParams};

#[derive(Parser)]
#[command(name = "subsense", version, about = "Word sense induction from masked-LM substitutes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every stage and write a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate substitutes for every instance.
    Substitute {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster substitutes per word.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        #[arg(long)]
        substitutes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score clusters against gold senses.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        #[arg(long)]
        clusters: PathBuf,
        /// Write report.json and report.txt here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a tokenized corpus into word-continuation-masking examples.
    WcmPrep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        mask_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep/random replacement shares, e.g. "0.1,0.1"; the rest are masked.
        #[arg(long, value_parser = parse_split)]
        split: Option<ReplacementSplit>,
    },
    /// Analyses of generated substitutes.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Serve a mock backend over the wire protocol.
    ServeMock {
        #[arg(long)]
        mock: PathBuf,
        #[arg(long, conflicts_with = "stdio")]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
    },
    /// Rerun the pipeline over values of one config field; writes a table and a chart.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        /// Config field to vary, e.g. "k" or "c_max".
        #[arg(long)]
        field: String,
        /// Comma-separated numeric values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Most discriminative substitute lemmas per gold sense.
    Discriminative {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        #[arg(long)]
        substitutes: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Taxonomic relation of top substitutes to their target.
    Relations {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set k=50 --set workers=8`.
        #[arg(long = "set", value_name = "FIELD=JSON")]
        set: Vec<String>,
        #[arg(long)]
        substitutes: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long, default_value_t = 20)]
        top_n: usize,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
    },
    /// Share of top substitutes written in the given script.
    Script {
        #[arg(long)]
        substitutes: PathBuf,
        #[arg(long, value_enum)]
        script: ScriptArg,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScriptArg {
    Latin,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
}

impl From<ScriptArg> for Script {
    fn from(s: ScriptArg) -> Self {
        match s {
            ScriptArg::Latin => Script::Latin,
            ScriptArg::Cyrillic => Script::Cyrillic,
            ScriptArg::Greek => Script::Greek,
            ScriptArg::Arabic => Script::Arabic,
            ScriptArg::Hebrew => Script::Hebrew,
            ScriptArg::Devanagari => Script::Devanagari,
        }
    }
}

fn parse_split(s: &str) -> Result<ReplacementSplit, String> {
    let (a, b) = s.split_once(',').ok_or("expected KEEP,RANDOM")?;
    let keep: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let random: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if keep < 0.0 || random < 0.0 || keep + random > 1.0 {
        return Err("shares must be non-negative and sum to at most 1".into());
    }
    Ok(ReplacementSplit { keep, random })
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code() as u8, msg: e.to_string() }
    }
}

impl From<pipeline::StageError> for Failure {
    fn from(e: pipeline::StageError) -> Self {
        Failure { code: e.exit_code() as u8, msg: e.to_string() }
    }
}

fn data_err(msg: impl ToString) -> Failure {
    Failure { code: 2, msg: msg.to_string() }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn sets(path: &Path) -> Result<Vec<SubstituteSet>, Failure> {
    let recs: Vec<SubstituteRecord> = pipeline::read_jsonl(path)?;
    Ok(recs.into_iter().map(SubstituteRecord::into_set).collect())
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { config, set, out } => {
            let cfg = RunConfig::load_with(&config, &set)?;
            let report = pipeline::run_pipeline(&cfg, &out)?;
            print!("{}", report.to_table());
        }
        Cmd::Substitute { config, set, out } => {
            let n = pipeline::substitute_command(&RunConfig::load_with(&config, &set)?, &out)?;
            log::info!("wrote {n} substitute records to {}", out.display());
        }
        Cmd::Cluster { config, set, substitutes, out } => {
            let n = pipeline::cluster_command(&RunConfig::load_with(&config, &set)?, &substitutes, &out)?;
            log::info!("wrote {n} cluster records to {}", out.display());
        }
        Cmd::Evaluate { config, set, clusters, out } => {
            let report = pipeline::evaluate_command(&RunConfig::load_with(&config, &set)?, &clusters)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(data_err)?;
                    let json = serde_json::to_string_pretty(&report).expect("serializable");
                    std::fs::write(dir.join("report.json"), json + "\n").map_err(data_err)?;
                    std::fs::write(dir.join("report.txt"), report.to_table()).map_err(data_err)?;
                }
                None => print!("{}", report.to_table()),
            }
        }
        Cmd::WcmPrep { input, output, mask_rate, seed, split } => {
            if !(0.0..=1.0).contains(&mask_rate) {
                return Err(Failure { code: 1, msg: "mask rate must be in [0, 1]".into() });
            }
            let params = WcmParams { mask_rate, seed, split };
            let r = BufReader::new(File::open(&input).map_err(data_err)?);
            let mut w = BufWriter::new(File::create(&output).map_err(data_err)?);
            let stats = wcm_prep_corpus(r, &mut w, &params).map_err(data_err)?;
            w.flush().map_err(data_err)?;
            print_json(&stats);
        }
        Cmd::Analyze { what } => analyze(what)?,
        Cmd::ServeMock { mock, listen, stdio } => {
            let backend = MockBackend::from_file(&mock).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
            match listen.filter(|_| !stdio) {
                None => {
                    serve_connection(&backend, io::stdin().lock(), io::stdout().lock()).map_err(data_err)?;
                }
                Some(addr) => {
                    serve_tcp(Arc::new(backend), addr.as_str(), |a| {
                    eprintln!("listening on {a}");
                })
                    .map_err(|e| Failure { code: 3, msg: e.to_string() })?;
                }
            }
        }
        Cmd::Sweep { config, set, field, values, out } => {
            let base = RunConfig::load_with(&config, &set)?;
            let base_json = serde_json::to_value(&base).expect("serializable");
            let mut runs = Vec::new();
            for v in values {
                let mut j = base_json.clone();
                let num = if v.fract() == 0.0 && v >= 0.0 {
                    serde_json::Value::from(v as u64)
                } else {
                    serde_json::Value::from(v)
                };
                j[field.as_str()] = num;
                let cfg: RunConfig = serde_json::from_value(j)
                    .map_err(|e| Failure { code: 1, msg: format!("{field}={v}: {e}") })?;
                runs.push((format!("{field}_{v}"), v, cfg));
            }
            let points = pipeline::sweep(&format!("Scores vs {field}"), &field, &runs, &out)?;
            print_json(&points);
        }
    }
    Ok(())
}

fn analyze(what: Analysis) -> Result<(), Failure> {
    match what {
        Analysis::Discriminative { config, set, substitutes, top_n } => {
            let cfg = RunConfig::load_with(&config, &set)?;
            let dataset = pipeline::load_dataset_for(&cfg)?;
            let lemmas = cfg.lemmas.build().map_err(|e| Failure { code: 1, msg: e.to_string() })?;
            let sets = sets(&substitutes)?;
            let mut out = BTreeMap::new();
            for word in dataset.words() {
                let insts = dataset.word_instances(word);
                let ids: BTreeMap<&str, &subsense::Instance> =
                    insts.iter().map(|i| (i.instance_id.as_str(), *i)).collect();
                let bags: Vec<_> = sets
                    .iter()
                    .filter_map(|s| {
                        let inst = ids.get(s.instance_id.as_str())?;
                        Some(lemmatize_set(s, &inst.language, lemmas.as_ref(), cfg.term_weighting))
                    })
                    .collect();
                let gold: BTreeMap<String, String> = insts
                    .iter()
                    .filter_map(|i| Some((i.instance_id.clone(), i.gold_sense.clone()?)))
                    .collect();
                out.insert(word.to_string(), discriminative_substitutes(&bags, &gold, top_n));
            }
            print_json(&out);
        }
        Analysis::Relations { config, set, substitutes, taxonomy, top_n, max_depth } => {
            let cfg = RunConfig::load_with(&config, &set)?;
            let dataset = pipeline::load_dataset_for(&cfg)?;
            let tax = TaxonomyGraph::load(&taxonomy).map_err(data_err)?;
            let mut by_word: BTreeMap<String, Vec<SubstituteSet>> = BTreeMap::new();
            for s in sets(&substitutes)? {
                let inst = dataset
                    .get(&s.instance_id)
                    .ok_or_else(|| data_err(format!("unknown instance {}", s.instance_id)))?;
                by_word.entry(inst.target_lemma.clone()).or_default().push(s);
            }
            let pairs: Vec<_> = by_word
                .iter()
                .flat_map(|(w, ss)| top_n_pairs(w, ss, top_n))
                .collect();
            print_json(&relation_distribution(&pairs, &tax, max_depth));
        }
        Analysis::Script { substitutes, script, top_k } => {
            let sets = sets(&substitutes)?;
            let share = substitute_language_share(
                sets.iter().flat_map(|s| s.words().take(top_k)),
                script.into(),
            );
            println!("{share:.6}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
