//! Command-line front end: synthetic data, training, evaluation and trees.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bilingual::{align_bilingual, AlignerConfig, TraceEntry};
use crate::embeddings::{load_embeddings, load_lexicon, normalize, EmbeddingSet, LexiconOptions};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_direct, evaluate_indirect, format_table, language_tree, EvalReport, PivotRoute, RetrievalCriterion,
};
use crate::multilingual::{align_multi, pair_loss_matrix, weights, Checkpoint, PairLossKind, WeightScheme};
use crate::objectives::OrthogonalMap;
use crate::synthetic::{generate_family, ground_truth_lexicon};

#[derive(Debug, Parser, Serialize)]
#[command(name = "hyperalign", version, about = "Unsupervised multilingual word-embedding alignment")]
pub struct Cli {
    /// Worker threads for similarity kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic family of languages with ground-truth lexicons.
    Synth(SynthArgs),
    /// Align one language onto a pivot.
    AlignBi(AlignBiArgs),
    /// Jointly align several languages into the pivot space.
    AlignMulti(AlignMultiArgs),
    /// Word-translation accuracy of trained maps.
    Eval(EvalArgs),
    /// Minimum spanning tree over a pairwise loss matrix.
    Tree(TreeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of languages, pivot included.
    #[arg(long)]
    pub langs: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Every field of the aligner configuration; unset flags keep their defaults.
#[derive(Debug, Args, Serialize, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub gw_size: Option<usize>,
    #[arg(long)]
    pub gw_eps: Option<f64>,
    #[arg(long)]
    pub gw_outer_iter: Option<usize>,
    #[arg(long)]
    pub gw_tol: Option<f64>,
    #[arg(long)]
    pub gw_inner_tol: Option<f64>,
    #[arg(long)]
    pub gw_inner_max_iter: Option<usize>,
    #[arg(long)]
    pub batch_first: Option<usize>,
    #[arg(long)]
    pub batch_rest: Option<usize>,
    #[arg(long)]
    pub lr_l2: Option<f64>,
    #[arg(long)]
    pub lr_rcsls_bilingual: Option<f64>,
    #[arg(long)]
    pub lr_rcsls_multi: Option<f64>,
    #[arg(long)]
    pub l2_epochs: Option<usize>,
    #[arg(long)]
    pub rcsls_epochs: Option<usize>,
    #[arg(long)]
    pub sinkhorn_rounds: Option<usize>,
    #[arg(long)]
    pub sinkhorn_reg: Option<f64>,
    #[arg(long)]
    pub sinkhorn_tol: Option<f64>,
    #[arg(long)]
    pub sinkhorn_max_iter: Option<usize>,
    #[arg(long)]
    pub knn_subsample: Option<usize>,
    #[arg(long)]
    pub iterations_per_epoch: Option<usize>,
    #[arg(long)]
    pub vocab_cap: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<AlignerConfig> {
        let d = AlignerConfig::default();
        let cfg = AlignerConfig {
            gw_size: self.gw_size.unwrap_or(d.gw_size),
            gw_eps: self.gw_eps.unwrap_or(d.gw_eps),
            gw_outer_iter: self.gw_outer_iter.unwrap_or(d.gw_outer_iter),
            gw_tol: self.gw_tol.unwrap_or(d.gw_tol),
            gw_inner_tol: self.gw_inner_tol.unwrap_or(d.gw_inner_tol),
            gw_inner_max_iter: self.gw_inner_max_iter.unwrap_or(d.gw_inner_max_iter),
            batch_first: self.batch_first.unwrap_or(d.batch_first),
            batch_rest: self.batch_rest.unwrap_or(d.batch_rest),
            lr_l2: self.lr_l2.unwrap_or(d.lr_l2),
            lr_rcsls_bilingual: self.lr_rcsls_bilingual.unwrap_or(d.lr_rcsls_bilingual),
            lr_rcsls_multi: self.lr_rcsls_multi.unwrap_or(d.lr_rcsls_multi),
            l2_epochs: self.l2_epochs.unwrap_or(d.l2_epochs),
            rcsls_epochs: self.rcsls_epochs.unwrap_or(d.rcsls_epochs),
            sinkhorn_rounds: self.sinkhorn_rounds.unwrap_or(d.sinkhorn_rounds),
            sinkhorn_reg: self.sinkhorn_reg.unwrap_or(d.sinkhorn_reg),
            sinkhorn_tol: self.sinkhorn_tol.unwrap_or(d.sinkhorn_tol),
            sinkhorn_max_iter: self.sinkhorn_max_iter.unwrap_or(d.sinkhorn_max_iter),
            knn_subsample: self.knn_subsample.unwrap_or(d.knn_subsample),
            iterations_per_epoch: self.iterations_per_epoch.or(d.iterations_per_epoch),
            vocab_cap: self.vocab_cap.unwrap_or(d.vocab_cap),
            k: self.k.unwrap_or(d.k),
            seed: self.seed.unwrap_or(d.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AlignBiArgs {
    /// Embeddings of the language to map; the file stem is its identifier.
    #[arg(long)]
    pub source: PathBuf,
    /// Embeddings of the pivot language.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum WeightsFlag {
    Umh,
    Uniform,
}

impl From<WeightsFlag> for WeightScheme {
    fn from(w: WeightsFlag) -> Self {
        match w {
            WeightsFlag::Umh => WeightScheme::Umh,
            WeightsFlag::Uniform => WeightScheme::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum LossFlag {
    Rcsls,
    L2,
}

#[derive(Debug, Args, Serialize)]
pub struct AlignMultiArgs {
    /// Embedding files, one per language; file stems are the identifiers.
    #[arg(long, num_args = 2.., required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Identifier of the pivot language (default: the first file).
    #[arg(long)]
    pub pivot: Option<String>,
    #[arg(long, value_enum, default_value_t = WeightsFlag::Umh)]
    pub weights: WeightsFlag,
    /// Loss reported in the pairwise loss matrix.
    #[arg(long, value_enum, default_value_t = LossFlag::Rcsls)]
    pub pair_loss: LossFlag,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum CriterionFlag {
    Nn,
    Csls,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// One joint checkpoint, or several bilingual checkpoints sharing a pivot
    /// whose maps are then composed.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Lexicon files named `<src>-<tgt>.<ext>`.
    #[arg(long, num_args = 1.., required = true)]
    pub lexicon: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = CriterionFlag::Csls)]
    pub criterion: CriterionFlag,
    #[arg(long, default_value_t = crate::objectives::DEFAULT_K)]
    pub k: usize,
    /// Translate through the pivot space and label reports accordingly.
    #[arg(long)]
    pub indirect: bool,
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long, default_value_t = crate::embeddings::DEFAULT_MAX_VOCAB)]
    pub vocab_cap: usize,
    /// Report file, one line per direction.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeArgs {
    /// Pairwise loss file written by `align-multi`.
    #[arg(long)]
    pub losses: PathBuf,
    /// Language left out of the tree.
    #[arg(long)]
    pub exclude: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_manifest(path: &Path, cli: &Cli, resolved: Option<&AlignerConfig>) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        version: &'a str,
        invocation: &'a Cli,
        config: Option<&'a AlignerConfig>,
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        invocation: cli,
        config: resolved,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write(path, &(text + "\n"))
}

fn load_normalized(path: &Path, cap: usize) -> Result<EmbeddingSet> {
    normalize(&load_embeddings(path, cap)?.set)
}

fn trace_text(trace: &[TraceEntry]) -> String {
    trace.iter().map(|e| format!("{e}\n")).collect()
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    create_dir(&args.out)?;
    let fam = generate_family(args.langs, args.n, args.d, args.sigma, args.seed)?;
    for set in &fam.sets {
        set.write_text(args.out.join(format!("{}.vec", set.lang())))?;
    }
    for i in 0..fam.num_langs() {
        for j in 0..fam.num_langs() {
            if i != j {
                let lex = ground_truth_lexicon(&fam, i, j)?;
                lex.write_text(args.out.join(format!("{}-{}.txt", lex.source_lang, lex.target_lang)))?;
            }
        }
    }
    let truth = Checkpoint {
        languages: fam.sets.iter().map(|s| s.lang().to_string()).collect(),
        maps: (0..fam.num_langs()).map(|i| fam.map_to_pivot(i)).collect(),
    };
    truth.write(args.out.join("true_maps.txt"))
}

fn run_align_bi(args: &AlignBiArgs, cfg: &AlignerConfig) -> Result<()> {
    let x = load_normalized(&args.source, cfg.vocab_cap)?;
    let y = load_normalized(&args.target, cfg.vocab_cap)?;
    let model = align_bilingual(&x, &y, cfg)?;
    create_dir(&args.out)?;
    let cp = Checkpoint {
        languages: vec![y.lang().to_string(), x.lang().to_string()],
        maps: vec![OrthogonalMap::identity(y.dim()), model.q.clone()],
    };
    cp.write(args.out.join("checkpoint.txt"))?;
    write(&args.out.join("trace.txt"), &trace_text(&model.loss_trace))
}

fn losses_text(labels: &[String], m: &ndarray::Array2<f64>) -> String {
    let mut out = labels.join(" ") + "\n";
    for row in m.rows() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

fn parse_losses(path: &Path) -> Result<(Vec<String>, ndarray::Array2<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let labels: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing label line"))?
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let n = labels.len();
    let mut m = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, i + 2, "loss matrix is truncated"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 2, "non-numeric loss"))?;
        if vals.len() != n {
            return Err(Error::parse(path, i + 2, format!("expected {n} values, found {}", vals.len())));
        }
        m.row_mut(i).assign(&ndarray::Array1::from(vals));
    }
    Ok((labels, m))
}

fn run_align_multi(args: &AlignMultiArgs, cfg: &AlignerConfig) -> Result<()> {
    let mut sets: Vec<EmbeddingSet> = args
        .embeddings
        .iter()
        .map(|p| load_normalized(p, cfg.vocab_cap))
        .collect::<Result<_>>()?;
    if let Some(pivot) = &args.pivot {
        let at = sets
            .iter()
            .position(|s| s.lang() == pivot)
            .ok_or_else(|| Error::InvalidArgument(format!("pivot `{pivot}` is not among the inputs")))?;
        let p = sets.remove(at);
        sets.insert(0, p);
    }
    let w = weights(sets.len(), args.weights.into())?;
    let alignment = align_multi(&sets, w.view(), cfg)?;
    create_dir(&args.out)?;
    alignment.checkpoint().write(args.out.join("checkpoint.txt"))?;
    write(&args.out.join("trace.txt"), &trace_text(&alignment.loss_trace))?;
    let kind = match args.pair_loss {
        LossFlag::Rcsls => PairLossKind::Rcsls,
        LossFlag::L2 => PairLossKind::L2,
    };
    let losses = pair_loss_matrix(&alignment, &sets, kind, cfg)?;
    write(&args.out.join("pair_losses.txt"), &losses_text(&alignment.languages, &losses))
}

/// Maps by language, either from one joint checkpoint or several bilingual ones.
struct MapTable {
    pivot: String,
    languages: Vec<String>,
    maps: Vec<OrthogonalMap>,
    composed: bool,
}

impl MapTable {
    fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut table: Option<MapTable> = None;
        for path in paths {
            let cp = Checkpoint::read(path)?;
            match table.as_mut() {
                None => {
                    table = Some(MapTable {
                        pivot: cp.languages[0].clone(),
                        languages: cp.languages,
                        maps: cp.maps,
                        composed: false,
                    })
                }
                Some(t) => {
                    if cp.languages[0] != t.pivot {
                        return Err(Error::LanguageMismatch {
                            expected: t.pivot.clone(),
                            found: cp.languages[0].clone(),
                        });
                    }
                    t.composed = true;
                    for (lang, map) in cp.languages.into_iter().zip(cp.maps).skip(1) {
                        if !t.languages.contains(&lang) {
                            t.languages.push(lang);
                            t.maps.push(map);
                        }
                    }
                }
            }
        }
        table.ok_or_else(|| Error::InvalidArgument("no checkpoint given".into()))
    }

    fn map_of(&self, lang: &str) -> Result<&OrthogonalMap> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|i| &self.maps[i])
            .ok_or_else(|| Error::MissingMap(lang.to_string()))
    }
}

fn lexicon_languages(path: &Path) -> Result<(String, String)> {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match stem.split_once('-') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(Error::InvalidArgument(format!(
            "lexicon file `{}` is not named `<src>-<tgt>`",
            path.display()
        ))),
    }
}

fn run_eval(args: &EvalArgs) -> Result<Vec<EvalReport>> {
    let table = MapTable::load(&args.checkpoint)?;
    let sets: Vec<EmbeddingSet> = args
        .embeddings
        .iter()
        .map(|p| load_normalized(p, args.vocab_cap))
        .collect::<Result<_>>()?;
    let find = |lang: &str| {
        sets.iter()
            .find(|s| s.lang() == lang)
            .ok_or_else(|| Error::InvalidArgument(format!("no embeddings given for `{lang}`")))
    };
    let criterion = match args.criterion {
        CriterionFlag::Nn => RetrievalCriterion::nn(),
        CriterionFlag::Csls => RetrievalCriterion::csls(args.k),
    };
    let options = LexiconOptions {
        lowercase: args.lowercase,
    };
    let mut reports = Vec::new();
    for path in &args.lexicon {
        let (s, t) = lexicon_languages(path)?;
        let (src, tgt) = (find(&s)?, find(&t)?);
        let lex = load_lexicon(path, src, tgt, options)?.lexicon;
        let (qs, qt) = (table.map_of(&s)?, table.map_of(&t)?);
        let report = if args.indirect {
            let route = if table.composed {
                PivotRoute::Composed { src: qs, tgt: qt }
            } else {
                PivotRoute::Joint { src: qs, tgt: qt }
            };
            evaluate_indirect(&lex, src, tgt, route, &table.pivot, criterion)?
        } else {
            evaluate_direct(&lex, src, tgt, qs, qt, criterion)?
        };
        println!("{report}");
        reports.push(report);
    }
    let lines: String = reports.iter().map(|r| format!("{r}\n")).collect();
    write(&args.out, &lines)?;
    print!("{}", format_table(&[(&criterion.to_string(), &reports)]));
    Ok(reports)
}

fn run_tree(args: &TreeArgs) -> Result<()> {
    let (labels, m) = parse_losses(&args.losses)?;
    let tree = language_tree(m.view(), &labels, args.exclude.as_deref())?;
    let text: String = tree.iter().map(|e| format!("{e}\n")).collect();
    print!("{text}");
    write(&args.out, &text)
}

fn manifest_path(cli: &Cli) -> PathBuf {
    let beside = |file: &Path| {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        file.with_file_name(name)
    };
    match &cli.command {
        Command::Synth(a) => a.out.join("manifest.json"),
        Command::AlignBi(a) => a.out.join("manifest.json"),
        Command::AlignMulti(a) => a.out.join("manifest.json"),
        Command::Eval(a) => beside(&a.out),
        Command::Tree(a) => beside(&a.out),
    }
}

/// Executes one parsed invocation and writes its manifest next to the outputs:
/// `manifest.json` inside output directories, `<file>.manifest.json` beside
/// single output files.
pub fn run(cli: &Cli) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let resolved = match &cli.command {
        Command::Synth(a) => {
            run_synth(a)?;
            None
        }
        Command::AlignBi(a) => {
            let cfg = a.config.resolve()?;
            run_align_bi(a, &cfg)?;
            Some(cfg)
        }
        Command::AlignMulti(a) => {
            let cfg = a.config.resolve()?;
            run_align_multi(a, &cfg)?;
            Some(cfg)
        }
        Command::Eval(a) => {
            run_eval(a)?;
            None
        }
        Command::Tree(a) => {
            run_tree(a)?;
            None
        }
    };
    write_manifest(&manifest_path(cli), cli, resolved.as_ref())
}
