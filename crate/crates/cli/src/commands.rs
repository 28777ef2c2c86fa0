use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use weaksup::checkpoint::{load_checkpoint, save_checkpoint};
use weaksup::corpus::{
    load_documents_detailed, load_embeddings, split_corpus, ClassCatalog, Document,
    EmbeddingMatrix, ExternalScoreTable, ScoreSet, Split, SplitRatios,
};
use weaksup::cotrain::{evaluate, train, training_partition, Mode, TrainConfig, TrainingData};
use weaksup::gradcheck::run_gradcheck;
use weaksup::rules::{build_weak_label_matrix, parse_rules, partition_matched, rule_stats, RuleSet};
use weaksup::WeakLabelMatrix;

use crate::config::FileConfig;
use crate::{CliError, HyperArgs, InputArgs};

/// Inputs and settings for one command, after merging flags over the config file.
#[derive(Debug)]
pub struct RunConfig {
    pub file: FileConfig,
    pub docs: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub scores: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub classes: Vec<String>,
    pub seed: Option<u64>,
    pub threshold_p: Option<usize>,
}

impl RunConfig {
    fn resolve(input: InputArgs) -> Result<Self, CliError> {
        let file = match &input.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let scores = if input.scores.is_empty() {
            file.list("scores", Vec::new())
                .into_iter()
                .map(PathBuf::from)
                .collect()
        } else {
            input.scores
        };
        Ok(RunConfig {
            docs: file.path("docs", input.docs),
            embeddings: file.path("embeddings", input.embeddings),
            rules: file.path("rules", input.rules),
            out: file.path("out", input.out),
            classes: file.list("classes", input.classes),
            seed: file.pick("seed", input.seed)?,
            threshold_p: file.pick("threshold-p", input.threshold_p)?,
            scores,
            file,
        })
    }

    fn require(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        value
            .clone()
            .ok_or_else(|| CliError::Input(format!("missing --{key}")))
    }

    /// Class catalog from `--classes`, else from `fallback` (a checkpoint).
    fn catalog(&self, fallback: Option<&[String]>) -> Result<ClassCatalog, CliError> {
        match (self.classes.is_empty(), fallback) {
            (false, Some(stored)) if self.classes != stored => Err(CliError::Input(format!(
                "--classes {:?} disagree with the model's classes {stored:?}",
                self.classes
            ))),
            (false, _) => Ok(ClassCatalog::new(self.classes.iter())?),
            (true, Some(stored)) => Ok(ClassCatalog::new(stored.iter())?),
            (true, None) => Err(CliError::Input(
                "missing --classes (comma-separated class names)".into(),
            )),
        }
    }

    fn train_config(&self, hyper: HyperArgs) -> Result<TrainConfig, CliError> {
        let f = &self.file;
        let d = TrainConfig::default();
        let mode = match f.pick::<String>("mode", hyper.mode)? {
            Some(m) => m.parse::<Mode>()?,
            None => d.mode,
        };
        let config = TrainConfig {
            c1: f.pick("c1", hyper.c1)?.unwrap_or(d.c1),
            c2: f.pick("c2", hyper.c2)?.unwrap_or(d.c2),
            c3: f.pick("c3", hyper.c3)?.unwrap_or(d.c3),
            alpha: f.pick("alpha", hyper.alpha)?.unwrap_or(d.alpha),
            lr: f.pick("lr", hyper.lr)?.unwrap_or(d.lr),
            hidden: f.pick("hidden", hyper.hidden)?.unwrap_or(d.hidden),
            max_epochs: f.pick("max-epochs", hyper.max_epochs)?.unwrap_or(d.max_epochs),
            patience: f.pick("patience", hyper.patience)?.unwrap_or(d.patience),
            threshold_p: self.threshold_p.unwrap_or(d.threshold_p),
            seed: self.seed.unwrap_or(d.seed),
            mode,
            clean_fraction: f
                .pick("clean-fraction", hyper.clean_fraction)?
                .unwrap_or(d.clean_fraction),
        };
        config.validate()?;
        Ok(config)
    }
}

struct Corpus {
    documents: Vec<Document>,
    rules: RuleSet,
    matrix: WeakLabelMatrix,
}

/// Loads documents (assigning splits by `seed` when none are given), the
/// score tables and the rules, and builds the weak-label matrix.
fn load_corpus(run: &RunConfig, catalog: &ClassCatalog, seed: u64) -> Result<Corpus, CliError> {
    let docs_path = run.require("docs", &run.docs)?;
    let loaded = load_documents_detailed(&docs_path, catalog)?;
    let documents = if loaded.explicit_splits > 0 {
        loaded.documents
    } else {
        split_corpus(loaded.documents, SplitRatios::default(), seed)?
    };
    let mut scores = ScoreSet::new();
    for p in &run.scores {
        scores.insert(ExternalScoreTable::load(p, &documents)?);
    }
    let rules_path = run.require("rules", &run.rules)?;
    let source = fs::read_to_string(&rules_path).map_err(|e| {
        CliError::Input(format!("cannot read rules {}: {e}", rules_path.display()))
    })?;
    let rules = parse_rules(&source, catalog)?;
    let matrix = build_weak_label_matrix(&rules, &documents, &scores)?;
    Ok(Corpus {
        documents,
        rules,
        matrix,
    })
}

fn load_aligned_embeddings(run: &RunConfig, documents: &[Document]) -> Result<EmbeddingMatrix, CliError> {
    let path = run.require("embeddings", &run.embeddings)?;
    let e = load_embeddings(&path, documents.len())?;
    e.check_alignment(documents)?;
    Ok(e)
}

fn out_dir(run: &RunConfig) -> Result<PathBuf, CliError> {
    let out = run.require("out", &run.out)?;
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

fn weak_labels_tsv(matrix: &WeakLabelMatrix, documents: &[Document]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    matrix.write_tsv(documents, &mut buf)?;
    Ok(buf)
}

pub fn cmd_match(input: InputArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(input)?;
    let catalog = run.catalog(None)?;
    let corpus = load_corpus(&run, &catalog, run.seed.unwrap_or(0))?;
    let out = out_dir(&run)?;
    let m = &corpus.matrix;
    write(&out.join("weak_labels.tsv"), weak_labels_tsv(m, &corpus.documents)?)?;

    let gold: Vec<Option<usize>> = corpus.documents.iter().map(|d| d.gold_label).collect();
    let mut stats = String::from("rule\tcoverage\taccuracy\thits\tcorrect\n");
    for (name, s) in corpus.rules.names().iter().zip(rule_stats(m, Some(gold.as_slice()))) {
        writeln!(
            stats,
            "{name}\t{:.6}\t{}\t{}\t{}",
            s.coverage,
            fmt_opt(s.accuracy),
            s.hits,
            s.correct
        )
        .unwrap();
    }
    write(&out.join("rule_stats.tsv"), &stats)?;

    let p = run.threshold_p.unwrap_or(0);
    let part = partition_matched(m, p)?;
    print!("{stats}");
    println!(
        "documents {}, rules {}, threshold p={p}: matched {}, unmatched {}",
        m.n(),
        m.k(),
        part.matched.len(),
        part.unmatched.len()
    );
    Ok(())
}

pub fn cmd_train(input: InputArgs, hyper: HyperArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(input)?;
    let config = run.train_config(hyper)?;
    let catalog = run.catalog(None)?;
    let corpus = load_corpus(&run, &catalog, config.seed)?;
    let embeddings = load_aligned_embeddings(&run, &corpus.documents)?;
    let out = out_dir(&run)?;
    let rule_names = corpus.rules.names();
    let data = TrainingData {
        documents: &corpus.documents,
        embeddings: &embeddings,
        weak_labels: &corpus.matrix,
        catalog: &catalog,
        rule_names: &rule_names,
    };
    let model = train(data, &config)?;

    save_checkpoint(out.join("model.wsm"), &model)?;
    write(&out.join("train_log.tsv"), model.train_log_tsv())?;
    let mut noise = String::new();
    for e in &model.log {
        writeln!(
            noise,
            "{}\t{}\t{}",
            e.epoch,
            fmt_opt(e.pseudo_noise),
            fmt_opt(e.majority_noise)
        )
        .unwrap();
    }
    write(&out.join("label_noise.tsv"), noise)?;
    write(&out.join("reliability.tsv"), model.reliability_report())?;
    write(
        &out.join("weak_labels.tsv"),
        weak_labels_tsv(&corpus.matrix, &corpus.documents)?,
    )?;

    let part = training_partition(&corpus.documents, &corpus.matrix, config.threshold_p)?;
    let best = &model.log[model.best_epoch - 1];
    let test = match evaluate(&model, &corpus.documents, &embeddings, &corpus.matrix, Split::Test) {
        Ok(m) => Some(m),
        Err(weaksup::Error::MissingGold(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let last = model.log.last().expect("training ran");
    let mut summary = String::new();
    let mut line = |k: &str, v: String| writeln!(summary, "{k}\t{v}").unwrap();
    line("mode", config.mode.to_string());
    line("matched", part.matched.len().to_string());
    line("unmatched", part.unmatched.len().to_string());
    line("epochs_run", model.log.len().to_string());
    line("best_epoch", model.best_epoch.to_string());
    line("dev_accuracy", fmt_opt(best.dev_accuracy));
    line("test_accuracy", fmt_opt(test.map(|t| t.accuracy)));
    line("majority_noise", fmt_opt(last.majority_noise));
    line("denoised_noise", fmt_opt(last.pseudo_noise));
    write(&out.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_eval(
    input: InputArgs,
    model_flag: Option<PathBuf>,
    split_flag: Option<String>,
    report_flag: Option<PathBuf>,
) -> Result<(), CliError> {
    let run = RunConfig::resolve(input)?;
    let model_path = run.file.require_path("model", model_flag)?;
    let model = load_checkpoint(&model_path)?;
    let split: Split = run
        .file
        .pick::<String>("split", split_flag)?
        .unwrap_or_else(|| "test".into())
        .parse()?;
    let catalog = run.catalog(Some(&model.class_names))?;
    let corpus = load_corpus(&run, &catalog, run.seed.unwrap_or(model.config.seed))?;
    if corpus.rules.names() != model.rule_names {
        return Err(CliError::Input(format!(
            "rules {:?} do not match the model's rules {:?}",
            corpus.rules.names(),
            model.rule_names
        )));
    }
    let embeddings = load_aligned_embeddings(&run, &corpus.documents)?;
    let metrics = evaluate(&model, &corpus.documents, &embeddings, &corpus.matrix, split)?;

    let report = match run.file.path("report", report_flag) {
        Some(p) => p,
        None => out_dir(&run)?.join("eval_report.json"),
    };
    write(&report, metrics.to_json())?;

    println!("split\t{}", metrics.split);
    println!("documents\t{}", metrics.total);
    println!("accuracy\t{:.6}", metrics.accuracy);
    println!("majority_noise\t{}", fmt_opt(metrics.majority_noise));
    println!("denoised_noise\t{}", fmt_opt(metrics.denoised_noise));
    for b in &metrics.by_rule_count {
        println!(
            "rules={}\t{}\t{}",
            b.votes,
            b.total,
            fmt_opt(b.accuracy)
        );
    }
    Ok(())
}

pub fn cmd_inspect(model_flag: Option<PathBuf>, config: Option<PathBuf>) -> Result<(), CliError> {
    let file = match config {
        Some(p) => FileConfig::load(&p)?,
        None => FileConfig::default(),
    };
    let model = load_checkpoint(file.require_path("model", model_flag)?)?;
    print!("{}", model.reliability_report());
    Ok(())
}

pub fn cmd_gradcheck(seed: u64, trials: usize, corrupt: Option<&str>) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Input("--trials must be positive".into()));
    }
    let report = run_gradcheck(seed, trials, corrupt)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let w = report.worst().expect("nonempty report");
        Err(CliError::Numeric(format!(
            "gradient check failed: worst tensor {} (path {}, relative error {:.3e})",
            w.worst_tensor,
            w.path.as_str(),
            w.max_error
        )))
    }
}
