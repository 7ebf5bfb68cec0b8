use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uncttp::data::{
    ingest, read_json, read_jsonl, seeds_for_runs, split, write_atomic, write_json, write_jsonl, Columns, Dataset,
    DatasetSpec, InputFormat, RunConfig, SplitName, SplitSizes,
};
use uncttp::evaluation::{
    distribution_report, grid_csv, transfer_eval, vanilla_distribution, Demos, EvalReport, Guidance, Pipeline,
    Strategy,
};
use uncttp::prompting::PromptTemplate;
use uncttp::provider::{
    CachedProvider, MockFixture, MockProfile, MockProvider, OpenAiConfig, OpenAiProvider, Provider, ResponseCache,
};
use uncttp::selection::{Embedder, RemoteEmbedder};
use uncttp::tripartite::{VerificationMethod, VerificationScore};
use uncttp::{Error, LabelSet, Result, TripartiteRecord};

/// Tripartite label-injection uncertainty probing and demonstration selection.
#[derive(Parser)]
#[command(name = "uncttp", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Run settings; each overrides the matching key of `--config`.
#[derive(Args)]
struct Global {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `mock` or `openai`.
    #[arg(long, global = true)]
    provider: Option<String>,
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, global = true)]
    api_key_env: Option<String>,
    /// The endpoint does not return token logprobs.
    #[arg(long, global = true)]
    no_logprobs: bool,
    /// Scripted mock answers (JSONL).
    #[arg(long, global = true)]
    fixture: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,
    /// Seed of wrong-label choice and sampling streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Provider requests in flight.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Prompt template file.
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    /// `tfidf` or `remote`.
    #[arg(long, global = true)]
    embedder: Option<String>,
    /// Split dataset produced by `split`.
    #[arg(long, alias = "dataset", global = true)]
    spec: Option<PathBuf>,
    /// Shots per label.
    #[arg(long, short = 'n', global = true)]
    shots: Option<usize>,
    /// Samples per instance for vanilla sampling and verification.
    #[arg(long, global = true)]
    q: Option<u32>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct SeedArgs {
    /// Number of evaluation runs (default seeds 13, 42, 87, then derived).
    #[arg(long)]
    seeds: Option<usize>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Read a CSV or JSONL corpus into a dataset file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// `csv` or `jsonl`; guessed from the extension when absent.
        #[arg(long)]
        format: Option<String>,
        /// Comma-separated labels, or one of sarcasm, humor, financial.
        #[arg(long)]
        labels: String,
        #[arg(long, default_value = "text")]
        text_column: String,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long, default_value = "id")]
        id_column: String,
        #[arg(long)]
        split_column: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded train/validation/test split of an ingested dataset.
    Split {
        #[arg(long)]
        input: PathBuf,
        /// `train/validation/test`, e.g. 500/1500/200.
        #[arg(long, required_unless_present = "from_column")]
        sizes: Option<String>,
        #[arg(long)]
        balance: bool,
        /// Use the split column read at ingestion.
        #[arg(long)]
        from_column: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tripartite records of one split.
    Uncttp {
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vanilla sampling records of one split.
    Vanilla {
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// P(True) or self-check scores of one split.
    Verify {
        /// `ptrue` or `selfcheck`.
        #[arg(long)]
        method: String,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Demonstrations chosen by a strategy.
    Select {
        strategy: String,
        /// Category for uncttp/vanilla; picked on validation when absent.
        #[arg(long)]
        category: Option<String>,
        /// Precomputed records instead of measuring.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best category of a category strategy on validation.
    PickCategory {
        #[arg(long, default_value = "uncttp")]
        strategy: String,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated test evaluation of a strategy.
    Eval {
        #[arg(long)]
        strategy: String,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate with records measured on another model.
    Transfer {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "uncttp")]
        strategy: String,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Category distribution of records, or a grid of evaluation reports.
    Report {
        #[arg(long, requires = "records")]
        distribution: bool,
        #[arg(long)]
        records: Option<PathBuf>,
        /// Records are vanilla sampling records.
        #[arg(long)]
        vanilla: bool,
        /// Evaluation report files to tabulate.
        #[arg(long, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn config(g: &Global) -> Result<RunConfig> {
    let mut c = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $key:ident),*) => {$(
            if let Some(v) = &g.$flag { c.$key = v.clone().into(); }
        )*};
    }
    set!(provider => provider, model => model, api_key_env => api_key_env, output => output,
         seed => seed, concurrency => concurrency, embedder => embedder, shots => n, q => q,
         temperature => temperature);
    if g.endpoint.is_some() {
        c.endpoint = g.endpoint.clone();
    }
    if g.fixture.is_some() {
        c.fixture = g.fixture.clone();
    }
    if g.cache_dir.is_some() {
        c.cache_dir = g.cache_dir.clone();
    }
    if g.template.is_some() {
        c.template = g.template.clone();
    }
    if g.spec.is_some() {
        c.dataset = g.spec.clone();
    }
    if g.no_logprobs {
        c.logprobs = false;
    }
    c.validate()?;
    Ok(c)
}

fn load_spec(c: &RunConfig) -> Result<DatasetSpec> {
    let path = c
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset: pass --spec or set `dataset`".into()))?;
    DatasetSpec::load(path)
}

fn template(c: &RunConfig) -> Result<PromptTemplate> {
    match &c.template {
        Some(p) => PromptTemplate::load(p),
        None => Ok(PromptTemplate::default()),
    }
}

fn provider(c: &RunConfig, spec: &DatasetSpec) -> Result<CachedProvider<Box<dyn Provider>>> {
    let inner: Box<dyn Provider> = match c.provider.as_str() {
        "openai" => {
            let mut cfg = OpenAiConfig::new(c.endpoint.clone().expect("validated")).api_key_from_env(&c.api_key_env);
            cfg.supports_logprobs = c.logprobs;
            Box::new(OpenAiProvider::new(cfg)?)
        }
        _ => {
            let mock = MockProvider::new(spec.labels.clone(), spec.all().cloned());
            Box::new(match &c.fixture {
                Some(f) => mock.with_fixture(MockFixture::load(f)?),
                None => mock.with_profile(MockProfile::oracle().logprobs(c.logprobs)),
            })
        }
    };
    Ok(CachedProvider::new(inner, ResponseCache::open(c.cache_dir())?))
}

fn embedder(c: &RunConfig) -> Result<Option<RemoteEmbedder>> {
    if c.embedder != "remote" {
        return Ok(None);
    }
    let endpoint = c.embed_endpoint.clone().or_else(|| c.endpoint.clone()).expect("validated");
    let model = c.embed_model.clone().unwrap_or_else(|| "text-embedding-3-small".into());
    let key = std::env::var(&c.api_key_env).ok().filter(|k| !k.is_empty());
    Ok(Some(RemoteEmbedder::new(endpoint, model, key)?))
}

fn report_calls(p: &CachedProvider<Box<dyn Provider>>) {
    eprintln!("provider calls: {}, cache hits: {}", p.misses(), p.hits());
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn emit(path: &Path) {
    println!("{}", path.display());
}

fn seeds(c: &RunConfig, s: &SeedArgs) -> Vec<u64> {
    match (&s.seed_list, s.seeds) {
        (Some(list), _) => list.clone(),
        (None, Some(n)) => seeds_for_runs(n),
        (None, None) => c.seeds.clone(),
    }
}

fn label_set(arg: &str) -> Result<LabelSet> {
    match arg {
        "sarcasm" => Ok(LabelSet::sarcasm()),
        "humor" => Ok(LabelSet::humor()),
        "financial" => Ok(LabelSet::financial()),
        list => LabelSet::new(list.split(',').map(str::trim)),
    }
}

fn guidance_from(records: &Path, strategy: &Strategy) -> Result<Guidance> {
    if !records.exists() {
        return Err(Error::MissingRecords(records.to_path_buf()));
    }
    Ok(match strategy {
        Strategy::Vanilla(_) => Guidance::Vanilla(read_jsonl(records)?),
        Strategy::UncTtp(_) => Guidance::Tripartite(read_jsonl(records)?),
        _ => Guidance::Scores(
            read_jsonl::<VerificationScore>(records)?
                .into_iter()
                .map(|s| (s.instance_id, s.score))
                .collect(),
        ),
    })
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest {
            input,
            format,
            labels,
            text_column,
            label_column,
            id_column,
            split_column,
            name,
            out,
        } => {
            let c = config(g)?;
            let format = match format {
                Some(f) => f.parse()?,
                None => InputFormat::from_path(&input)
                    .ok_or_else(|| Error::Config(format!("cannot infer format of {}", input.display())))?,
            };
            let columns = Columns {
                text: text_column,
                label: label_column,
                id: id_column,
                split: split_column,
            };
            let name = name.unwrap_or_else(|| {
                input.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned())
            });
            let ds = ingest(&input, format, &columns, &label_set(&labels)?, name)?;
            let out = out.unwrap_or_else(|| c.output.join("dataset.json"));
            ds.save(&out)?;
            emit(&out);
        }
        Command::Split {
            input,
            sizes,
            balance,
            from_column,
            out,
        } => {
            let c = config(g)?;
            let ds = Dataset::load(&input)?;
            let spec = if from_column {
                ds.presplit()?
            } else {
                let sizes: SplitSizes = sizes.expect("required by clap").parse()?;
                split(&ds, sizes, balance, c.seed)?
            };
            let out = out.unwrap_or_else(|| c.output.join("spec.json"));
            spec.save(&out)?;
            emit(&out);
        }
        Command::Uncttp { split, out } => {
            let (c, spec, t) = setup(g)?;
            let p = provider(&c, &spec)?;
            let pipe = pipeline(&c, &p, &spec, &t);
            let which: SplitName = split.parse()?;
            let records = pipe.prober().classify_all(spec.split(which))?;
            let out = out.unwrap_or_else(|| c.output.join(format!("uncttp.{}.jsonl", which.as_str())));
            write_jsonl(&out, &records)?;
            report_calls(&p);
            emit(&out);
        }
        Command::Vanilla { split, out } => {
            let (c, spec, t) = setup(g)?;
            let p = provider(&c, &spec)?;
            let pipe = pipeline(&c, &p, &spec, &t);
            let which: SplitName = split.parse()?;
            let records = pipe.prober().vanilla_all(spec.split(which), c.q, c.temperature)?;
            let out = out.unwrap_or_else(|| c.output.join(format!("vanilla.{}.jsonl", which.as_str())));
            write_jsonl(&out, &records)?;
            report_calls(&p);
            emit(&out);
        }
        Command::Verify { method, split, out } => {
            let (c, spec, t) = setup(g)?;
            let method = match method.as_str() {
                "ptrue" => VerificationMethod::PTrue,
                "selfcheck" => VerificationMethod::SelfCheck,
                other => return Err(Error::Config(format!("unknown verification method `{other}`"))),
            };
            let p = provider(&c, &spec)?;
            let pipe = pipeline(&c, &p, &spec, &t);
            let which: SplitName = split.parse()?;
            let scores = pipe.prober().verify_all(spec.split(which), method, c.q)?;
            let name = match method {
                VerificationMethod::PTrue => "ptrue",
                VerificationMethod::SelfCheck => "selfcheck",
            };
            let out = out.unwrap_or_else(|| c.output.join(format!("verify-{name}.{}.jsonl", which.as_str())));
            write_jsonl(&out, &scores)?;
            report_calls(&p);
            emit(&out);
        }
        Command::Select {
            strategy,
            category,
            records,
            out,
        } => {
            let (c, spec, t) = setup(g)?;
            let strategy: Strategy = strategy.parse()?;
            let p = provider(&c, &spec)?;
            let remote = embedder(&c)?;
            let pipe = with_embedder(pipeline(&c, &p, &spec, &t), remote.as_ref());
            let guidance = match &records {
                Some(r) => guidance_from(r, &strategy)?,
                None => pipe.guidance(&strategy)?,
            };
            let category = match (&strategy, category) {
                (_, Some(cat)) => Some(cat),
                (Strategy::UncTtp(None) | Strategy::Vanilla(None), None) => {
                    Some(pipe.pick_category(&strategy, &guidance)?.chosen)
                }
                _ => None,
            };
            let demos = pipe.demonstrations(&strategy, &guidance, category.as_deref(), c.seed, &spec.test)?;
            let out = out.unwrap_or_else(|| c.output.join(format!("select-{}.jsonl", slug(&strategy.to_string()))));
            match &demos {
                Demos::Shared(set) => write_jsonl(&out, std::slice::from_ref(set))?,
                Demos::PerInstance(map) => {
                    let rows: Vec<serde_json::Value> = map
                        .iter()
                        .map(|(id, set)| serde_json::json!({ "test_id": id, "demonstration_ids": set.ids().collect::<Vec<_>>() }))
                        .collect();
                    write_jsonl(&out, &rows)?
                }
            }
            report_calls(&p);
            emit(&out);
        }
        Command::PickCategory { strategy, records, out } => {
            let (c, spec, t) = setup(g)?;
            let strategy: Strategy = strategy.parse()?;
            let p = provider(&c, &spec)?;
            let pipe = pipeline(&c, &p, &spec, &t);
            let guidance = match &records {
                Some(r) => guidance_from(r, &strategy)?,
                None => pipe.guidance(&strategy)?,
            };
            let choice = pipe.pick_category(&strategy, &guidance)?;
            let out = out.unwrap_or_else(|| c.output.join(format!("category-{}.json", slug(&strategy.to_string()))));
            write_json(&out, &choice)?;
            report_calls(&p);
            emit(&out);
        }
        Command::Eval {
            strategy,
            seeds: s,
            records,
            out,
        } => {
            let (c, spec, t) = setup(g)?;
            let strategy: Strategy = strategy.parse()?;
            let p = provider(&c, &spec)?;
            let remote = embedder(&c)?;
            let pipe = with_embedder(pipeline(&c, &p, &spec, &t), remote.as_ref()).seeds(seeds(&c, &s));
            let report = match &records {
                Some(r) => pipe.evaluate_guided(&strategy, &guidance_from(r, &strategy)?)?,
                None => pipe.evaluate(&strategy)?,
            };
            let out = out.unwrap_or_else(|| c.output.join(format!("report-{}.json", slug(&strategy.to_string()))));
            write_report(&out, &report)?;
            report_calls(&p);
            println!("{} {}: {}", report.method, report.dataset, report.summary);
            emit(&out);
        }
        Command::Transfer {
            records,
            strategy,
            seeds: s,
            out,
        } => {
            let (c, spec, t) = setup(g)?;
            let strategy: Strategy = strategy.parse()?;
            let p = provider(&c, &spec)?;
            let pipe = pipeline(&c, &p, &spec, &t).seeds(seeds(&c, &s));
            let report = transfer_eval(&records, &pipe, &strategy)?;
            let out = out.unwrap_or_else(|| {
                c.output.join(format!("transfer-{}-{}.json", slug(&strategy.to_string()), slug(&c.model)))
            });
            write_report(&out, &report)?;
            report_calls(&p);
            println!("{} {}: {}", report.method, report.dataset, report.summary);
            emit(&out);
        }
        Command::Report {
            distribution,
            records,
            vanilla,
            reports,
            out,
        } => {
            let c = config(g)?;
            if distribution {
                let spec = load_spec(&c)?;
                let records = records.expect("required by clap");
                if !records.exists() {
                    return Err(Error::MissingRecords(records));
                }
                let all: Vec<_> = spec.all().cloned().collect();
                let table = if vanilla {
                    vanilla_distribution(&read_jsonl(&records)?, &all, &spec.labels, &spec.name)
                } else {
                    let recs: Vec<TripartiteRecord> = read_jsonl(&records)?;
                    distribution_report(&recs, &all, &spec.labels, &spec.name)
                };
                let csv = table.to_csv()?;
                print!("{csv}");
                match table.wavering {
                    Some(w) => eprintln!("wavering: {w:.3}"),
                    None => eprintln!("wavering: n/a"),
                }
                let out = out.unwrap_or_else(|| c.output.join("distribution.csv"));
                write_atomic(&out, csv.as_bytes())?;
                emit(&out);
            } else {
                if reports.is_empty() {
                    return Err(Error::Config("report needs --distribution or --reports".into()));
                }
                let loaded: Vec<EvalReport> = reports.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
                let csv = grid_csv(&loaded)?;
                print!("{csv}");
                let out = out.unwrap_or_else(|| c.output.join("grid.csv"));
                write_atomic(&out, csv.as_bytes())?;
                emit(&out);
            }
        }
    }
    Ok(())
}

fn setup(g: &Global) -> Result<(RunConfig, DatasetSpec, PromptTemplate)> {
    let c = config(g)?;
    let spec = load_spec(&c)?;
    let t = template(&c)?;
    Ok((c, spec, t))
}

fn pipeline<'a>(
    c: &RunConfig,
    p: &'a CachedProvider<Box<dyn Provider>>,
    spec: &'a DatasetSpec,
    t: &'a PromptTemplate,
) -> Pipeline<'a> {
    Pipeline::new(p, c.model.clone(), spec, t)
        .shots(c.n)
        .q(c.q)
        .temperature(c.temperature)
        .seed(c.seed)
        .seeds(c.seeds.clone())
        .concurrency(c.concurrency)
}

fn with_embedder<'a>(pipe: Pipeline<'a>, e: Option<&'a RemoteEmbedder>) -> Pipeline<'a> {
    match e {
        Some(e) => pipe.with_embedder(e as &dyn Embedder),
        None => pipe,
    }
}

/// JSON report plus a one-row grid CSV beside it.
fn write_report(out: &Path, report: &EvalReport) -> Result<()> {
    write_atomic(out, report.to_json()?.as_bytes())?;
    write_atomic(&out.with_extension("csv"), grid_csv(std::slice::from_ref(report))?.as_bytes())
}
