//! `lithoquery` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid input, 4 parse error,
//! 5 provider failure, 6 state conflict, 7 not found, 8 I/O.

mod output;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geo_types::Coord;
use lithoquery::config::Config;
use lithoquery::depositmodel::DepositModel;
use lithoquery::evaluate::OracleMode;
use lithoquery::geodata::{FocusArea, IngestConfig};
use lithoquery::project::ProjectSettings;
use lithoquery::workspace::{
    ContactRequest, DeriveOp, DeriveRequest, EvalSitesRequest, EvalTractsRequest, GridSearchRequest,
    IngestRequest, QueryRequest, ScoreFilter, Source, SummarizeRequest, Truth, Workspace,
};
use lithoquery::{Error, ErrorClass, Result};
use serde_json::Value;

pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "lithoquery", version, about = "Natural-language evidence layers over geologic maps")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every random draw (random-baseline trials).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML settings file; flags given here take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "default")]
    project: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read a polygon GeoJSON (and optional attribute CSV) into a dataset.
    Ingest(IngestArgs),
    /// Merge records sharing a signature.
    Dissolve {
        #[arg(long)]
        dataset: String,
    },
    /// Reproject a WGS84 dataset to the configured Albers projection.
    Project {
        #[arg(long)]
        dataset: String,
    },
    /// Clip a projected dataset to a saved focus area.
    Clip {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        focus: String,
    },
    /// Score a dataset against a query and save the evidence layer.
    Query(QueryArgs),
    /// Derive a contact layer from two or more evidence layers.
    Contact {
        /// Comma-separated evidence layer ids.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<String>,
        #[arg(long)]
        r1: Option<f64>,
        #[arg(long)]
        r2: Option<f64>,
        #[arg(long)]
        arc_segments: Option<u32>,
    },
    /// Site recall curves with oracle and random baselines.
    EvalSites {
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<String>,
        /// CSV of site_id,name,longitude,latitude.
        #[arg(long)]
        sites: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        buffers: Vec<f64>,
        #[arg(long, default_value_t = lithoquery::workspace::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long)]
        greedy_oracle: bool,
    },
    /// Area precision, recall, F1 and IoU against expert tracts.
    EvalTracts {
        #[arg(long)]
        pred: String,
        #[command(flatten)]
        truth: TruthArgs,
    },
    /// Contact-layer grid search over τ, r1 and r2.
    Gridsearch {
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<String>,
        #[command(flatten)]
        truth: TruthArgs,
        /// Comma-separated τ values; repeat once per layer.
        #[arg(long, required = true)]
        taus: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        r1: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        r2: Vec<f64>,
        #[arg(long)]
        arc_segments: Option<u32>,
    },
    /// Deposit models.
    #[command(subcommand)]
    Models(ModelCmd),
    /// Write a layer's features as GeoJSON, optionally filtered by score.
    Export {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        score_min: Option<f64>,
        #[arg(long)]
        score_max: Option<f64>,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Score histogram of a layer.
    Histogram {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// List layers of the project, or show one.
    Layers {
        #[arg(long)]
        layer: Option<String>,
    },
    /// List datasets of the project.
    Datasets,
    /// Projects in the data directory.
    #[command(subcommand)]
    Projects(ProjectCmd),
    /// Focus areas of the project.
    #[command(subcommand)]
    Focus(FocusCmd),
    /// Embedding providers available.
    Providers,
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// FeatureCollection path, or - for stdin.
    #[arg(long, required_unless_present = "url")]
    geojson: Option<PathBuf>,
    #[arg(long, requires = "sha256", conflicts_with = "geojson")]
    url: Option<String>,
    #[arg(long)]
    sha256: Option<String>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    signature_columns: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    key_columns: Option<Vec<String>>,
    #[arg(long)]
    min_desc_length: Option<usize>,
    #[arg(long)]
    join_column: Option<String>,
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long)]
    dissolve: bool,
    /// Reproject to Albers after ingest.
    #[arg(long)]
    albers: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    dataset: String,
    /// Custom query text.
    #[arg(long, conflicts_with_all = ["deposit_type", "characteristic"])]
    text: Option<String>,
    #[arg(long, requires = "characteristic")]
    deposit_type: Option<String>,
    #[arg(long, requires = "deposit_type")]
    characteristic: Option<String>,
    #[arg(long, conflicts_with = "percentile")]
    tau: Option<f64>,
    /// Keep the top (100 - p)% of records.
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    focus: Option<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TruthArgs {
    /// Tract GeoJSON.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    truth_layer: Option<String>,
}

#[derive(Subcommand)]
enum ModelCmd {
    List,
    Get { deposit_type: String },
    /// Store an edited model from a JSON file.
    Put { file: PathBuf },
    Validate { file: PathBuf },
    /// Summarize a document into a model with the configured LLM.
    Summarize {
        #[arg(long)]
        deposit_type: String,
        #[arg(long)]
        document: PathBuf,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        save: bool,
    },
}

#[derive(Subcommand)]
enum ProjectCmd {
    List,
    /// Create the project named by --project.
    Create {
        #[arg(long)]
        name: Option<String>,
    },
    Show,
}

#[derive(Subcommand)]
enum FocusCmd {
    List,
    /// Save a rectangle or polygon drawn in WGS84.
    Add {
        #[arg(long)]
        name: Option<String>,
        /// "lon,lat;lon,lat;..." vertices.
        #[arg(
            long,
            allow_hyphen_values = true,
            required_unless_present = "geojson",
            conflicts_with = "geojson",
            requires = "name"
        )]
        ring: Option<String>,
        #[arg(long)]
        geojson: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 3,
        ErrorClass::Parse => 4,
        ErrorClass::Provider => 5,
        ErrorClass::State => 6,
        ErrorClass::NotFound => 7,
        ErrorClass::Io => 8,
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Cmd::Serve { bind, port } = &cli.cmd {
        if let Some(b) = bind {
            cfg.bind_address = b.clone();
        }
        if let Some(p) = port {
            cfg.port = *p;
        }
    }
    Ok(cfg)
}

fn source(path: &Path) -> Result<Source> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Error::io("stdin", e))?;
        return Ok(Source::text(text));
    }
    Ok(Source::path(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let (text, name) = source(path)?.read("file")?;
    serde_json::from_str(&text).map_err(|e| Error::from_json(&name, e))
}

fn truth(t: TruthArgs) -> Result<Truth> {
    match (t.truth, t.truth_layer) {
        (Some(p), _) => Ok(Truth::Geojson(source(&p)?)),
        (None, Some(l)) => Ok(Truth::LayerId(l)),
        (None, None) => Err(Error::Input("give --truth or --truth-layer".into())),
    }
}

fn parse_ring(s: &str) -> Result<Vec<Coord<f64>>> {
    s.split(';')
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            let mut it = v.split(',').map(|n| n.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => Ok(Coord { x, y }),
                _ => Err(Error::Input(format!("bad vertex {v:?}; expected lon,lat"))),
            }
        })
        .collect()
}

fn parse_taus(groups: &[String]) -> Result<Vec<Vec<f64>>> {
    groups
        .iter()
        .map(|g| {
            g.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Input(format!("bad τ value {t:?}")))
                })
                .collect()
        })
        .collect()
}

fn to_value<T: serde::Serialize>(v: T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let pid = cli.project.clone();
    let (json, seed) = (cli.json, cli.seed);

    if let Cmd::Serve { .. } = cli.cmd {
        tracing_subscriber::fmt()
            .with_env_filter(
                tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
            )
            .init();
        let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
        return rt.block_on(lithoquery_service::serve(cfg));
    }

    let ws = Workspace::new(cfg)?;
    let store = ws.store();
    let value = match cli.cmd {
        Cmd::Ingest(a) => {
            store.ensure_project(&pid)?;
            let mut config = IngestConfig::default();
            if let Some(v) = a.signature_columns {
                config.signature_columns = v;
            }
            if let Some(v) = a.key_columns {
                config.key_columns = v;
            }
            if let Some(v) = a.min_desc_length {
                config.min_desc_length = v;
            }
            if let Some(v) = a.join_column {
                config.join_column = v;
            }
            config.dataset_id = a.dataset_id;
            let req = IngestRequest {
                geojson: a.geojson.as_deref().map(source).transpose()?,
                geojson_url: a.url,
                sha256: a.sha256,
                attributes: a.attributes.as_deref().map(source).transpose()?,
                config,
                dissolve: a.dissolve,
                project: a.albers,
                request_id: None,
            };
            to_value(ws.ingest(&pid, &req)?)?
        }
        Cmd::Dissolve { dataset } => derive(&ws, &pid, dataset, DeriveOp::Dissolve)?,
        Cmd::Project { dataset } => derive(&ws, &pid, dataset, DeriveOp::Project)?,
        Cmd::Clip { dataset, focus } => derive(&ws, &pid, dataset, DeriveOp::Clip { focus_area: focus })?,
        Cmd::Query(a) => {
            store.ensure_project(&pid)?;
            let req = QueryRequest {
                dataset_id: a.dataset,
                query: a.text,
                deposit_type: a.deposit_type,
                characteristic: a.characteristic,
                tau: a.tau,
                percentile: a.percentile,
                provider_id: a.provider,
                bins: a.bins,
                focus_area: a.focus,
                request_id: None,
            };
            to_value(ws.query(&pid, &req)?)?
        }
        Cmd::Contact {
            layers,
            r1,
            r2,
            arc_segments,
        } => {
            store.ensure_project(&pid)?;
            let req = ContactRequest {
                layer_ids: layers,
                r1,
                r2,
                arc_segments,
                request_id: None,
            };
            to_value(ws.contact(&pid, &req)?)?
        }
        Cmd::EvalSites {
            layers,
            sites,
            buffers,
            trials,
            greedy_oracle,
        } => {
            let req = EvalSitesRequest {
                layer_ids: layers,
                sites: source(&sites)?,
                buffers_m: buffers,
                trials,
                seed,
                oracle_mode: if greedy_oracle {
                    OracleMode::GreedyMarginal
                } else {
                    OracleMode::Static
                },
            };
            to_value(ws.eval_sites(&req)?)?
        }
        Cmd::EvalTracts { pred, truth: t } => to_value(ws.eval_tracts(&EvalTractsRequest {
            pred_layer_id: pred,
            truth: truth(t)?,
        })?)?,
        Cmd::Gridsearch {
            layers,
            truth: t,
            taus,
            r1,
            r2,
            arc_segments,
        } => to_value(ws.grid_search(&GridSearchRequest {
            layer_ids: layers,
            truth: truth(t)?,
            taus: parse_taus(&taus)?,
            r1,
            r2,
            arc_segments,
        })?)?,
        Cmd::Models(m) => match m {
            ModelCmd::List => to_value(ws.models()?)?,
            ModelCmd::Get { deposit_type } => to_value(ws.model(&deposit_type)?)?,
            ModelCmd::Put { file } => to_value(ws.put_model(read_json::<DepositModel>(&file)?)?)?,
            ModelCmd::Validate { file } => to_value(ws.validate_model(&read_json::<DepositModel>(&file)?))?,
            ModelCmd::Summarize {
                deposit_type,
                document,
                template,
                save,
            } => {
                let prompt_template = match template {
                    Some(p) => Some(source(&p)?.read("template")?.0),
                    None => None,
                };
                to_value(ws.summarize(&SummarizeRequest {
                    deposit_type,
                    document: source(&document)?,
                    prompt_template,
                    save,
                })?)?
            }
        },
        Cmd::Export {
            layer,
            score_min,
            score_max,
            out,
        } => {
            let fc = ws.export(&layer, ScoreFilter { score_min, score_max })?;
            let text = serde_json::to_string(&fc)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                    serde_json::json!({"layer_id": layer, "features": fc.features.len(), "path": path})
                }
                None => {
                    println!("{text}");
                    return Ok(());
                }
            }
        }
        Cmd::Histogram { layer, bins } => to_value(ws.histogram(&layer, bins)?)?,
        Cmd::Layers { layer: Some(id) } => to_value(ws.layer(&id)?)?,
        Cmd::Layers { layer: None } => to_value(ws.layers(&pid)?)?,
        Cmd::Datasets => to_value(ws.datasets(&pid)?)?,
        Cmd::Projects(p) => match p {
            ProjectCmd::List => to_value(store.projects()?)?,
            ProjectCmd::Create { name } => to_value(store.create_project_with_id(
                &pid,
                name.as_deref().unwrap_or(&pid),
                ProjectSettings::default(),
            )?)?,
            ProjectCmd::Show => to_value(store.project(&pid)?)?,
        },
        Cmd::Focus(f) => match f {
            FocusCmd::List => to_value(ws.focus_areas(&pid)?)?,
            FocusCmd::Add { name, ring, geojson } => {
                store.ensure_project(&pid)?;
                let area = match (ring, geojson) {
                    (Some(r), _) => FocusArea::new(name.unwrap_or_default(), parse_ring(&r)?)?,
                    (None, Some(p)) => {
                        let (text, src) = source(&p)?.read("focus area")?;
                        let mut area = FocusArea::from_geojson(&text, &src)?;
                        if let Some(n) = name {
                            area = FocusArea::new(n, area.ring.clone())?;
                        }
                        area
                    }
                    (None, None) => return Err(Error::Input("give --ring or --geojson".into())),
                };
                to_value(ws.save_focus_area(&pid, &area, None)?)?
            }
        },
        Cmd::Providers => to_value(ws.config().provider_ids())?,
        Cmd::Serve { .. } => unreachable!(),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        print!("{}", output::human(&value));
    }
    Ok(())
}

fn derive(ws: &Workspace, pid: &str, dataset_id: String, op: DeriveOp) -> Result<Value> {
    let req = DeriveRequest {
        dataset_id,
        op,
        request_id: None,
    };
    to_value(ws.derive(pid, &req)?)
}
