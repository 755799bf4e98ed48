//! The `las` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use las_core::decoder::{rescore_nbest, Hypothesis, LmLevel, SentenceLm};
use las_core::lm::{train_ngram, NeuralLm, NeuralLmConfig};
use las_core::model::LasModel;
use las_core::numerics::Prng;
use las_core::training::{wer_counts, Trainer, WerReport};
use las_core::wordpiece::{learn_bpe, normalize_text, WordPieceVocab, EOS};

use crate::config::Config;
use crate::error::{read_text, write_atomic, Error, Result};
use crate::formats::{
    infer_las_config, infer_lm_config, load_arpa, load_jsonl, load_manifest, load_params, load_vocab, save_arpa,
    save_features, save_jsonl, save_params, save_vocab, ManifestRecord, NbestRecord,
};
use crate::frontend::{compute_fbank, read_audio, speed_perturb, write_audio};
use crate::pipeline::{decode_corpus, fit, fit_mwer, init_model, load_corpus, par_map, train_nnlm, OutputDir};

#[derive(Parser, Debug)]
#[command(name = "las", version, about = "Attention-based speech recognition toolkit")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured seed (and LAS_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-utterance work
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract log-mel filter banks to FBNK files
    Features(FeaturesArgs),
    /// Speed-perturb audio
    Augment(AugmentArgs),
    /// Learn a word-piece vocabulary
    BpeLearn(BpeLearnArgs),
    /// Encode text as word pieces (or decode them back)
    BpeApply(BpeApplyArgs),
    /// Cross-entropy training, followed by MWER when mwer_epochs > 0
    Train(TrainArgs),
    /// MWER fine-tuning of a trained model
    MwerTrain(TrainArgs),
    /// Estimate a word n-gram LM and write it as ARPA
    NgramBuild(NgramArgs),
    /// Train the word-piece LSTM LM
    NnlmTrain(NnlmArgs),
    /// Beam-search decoding to an n-best JSONL file
    Decode(DecodeArgs),
    /// Re-rank an n-best file with an external LM
    Rescore(RescoreArgs),
    /// Word error rate between line-aligned transcript files
    Wer(WerArgs),
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    /// Input WAV (single-file mode)
    input: Option<PathBuf>,
    /// Output FBNK (single-file mode)
    output: Option<PathBuf>,
    /// Manifest of audio records (batch mode)
    #[arg(long, conflicts_with = "input")]
    manifest: Option<PathBuf>,
    /// Directory for FBNK files and `manifest.jsonl` (batch mode)
    #[arg(long, requires = "manifest")]
    out_dir: Option<PathBuf>,
    /// Per-utterance mean and variance normalization
    #[arg(long)]
    cmvn: bool,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Input WAV (single-file mode)
    input: Option<PathBuf>,
    /// Output WAV (single-file mode)
    output: Option<PathBuf>,
    /// Speed factor; defaults to every configured speed_factors entry in
    /// batch mode
    #[arg(long)]
    factor: Option<f64>,
    /// Manifest of audio records (batch mode)
    #[arg(long, conflicts_with = "input")]
    manifest: Option<PathBuf>,
    /// Directory for perturbed WAVs and `manifest.jsonl` (batch mode)
    #[arg(long, requires = "manifest")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TextSource {
    /// Plain text, one transcript per line
    #[arg(long, conflicts_with = "manifest")]
    text: Option<PathBuf>,
    /// Manifest whose transcripts are used
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BpeLearnArgs {
    #[command(flatten)]
    source: TextSource,
    /// Output WPV1 vocabulary
    #[arg(long)]
    out: PathBuf,
    /// Target vocabulary size (overrides `wordpieces`)
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args, Debug)]
struct BpeApplyArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Input text, one sentence per line
    #[arg(long)]
    text: PathBuf,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Read space-separated ids and write words
    #[arg(long)]
    decode: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training manifest
    #[arg(long)]
    manifest: PathBuf,
    /// Validation manifest; the training set stands in when absent
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    /// Checkpoint to start from (required for mwer-train)
    #[arg(long)]
    init: Option<PathBuf>,
    /// Checkpoints and logs go here
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides `epochs` (or `mwer_epochs` for mwer-train)
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct NgramArgs {
    #[command(flatten)]
    source: TextSource,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    discount: Option<f64>,
}

#[derive(Args, Debug)]
struct NnlmArgs {
    #[command(flatten)]
    source: TextSource,
    #[arg(long)]
    vocab: PathBuf,
    /// Output LASF checkpoint
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Recognizer checkpoint
    #[arg(long)]
    model: PathBuf,
    /// N-best JSONL output
    #[arg(long)]
    out: PathBuf,
    /// Word-piece LM checkpoint for shallow fusion
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    lm_weight: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    nbest: Option<usize>,
    #[arg(long)]
    length_alpha: Option<f64>,
    /// Also write `id<TAB>top-1 text` lines here
    #[arg(long)]
    hyp: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Level {
    Word,
    Wordpiece,
}

#[derive(Args, Debug)]
struct RescoreArgs {
    /// N-best JSONL input
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Word-level ARPA LM
    #[arg(long, conflicts_with = "nnlm", required_unless_present = "nnlm")]
    arpa: Option<PathBuf>,
    /// Word-piece LM checkpoint
    #[arg(long)]
    nnlm: Option<PathBuf>,
    /// Overrides `lm_weight`
    #[arg(long)]
    lm_weight: Option<f64>,
    /// Defaults to word for ARPA and wordpiece for the neural LM
    #[arg(long, value_enum)]
    level: Option<Level>,
}

#[derive(Args, Debug)]
struct WerArgs {
    /// Reference transcripts, one per line
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypotheses, line-aligned with the references
    #[arg(long)]
    hyp: PathBuf,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<las_core::Error> for Failure {
    fn from(e: las_core::Error) -> Self {
        Failure::Run(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `args` (program name first) and runs the subcommand. Returns 0 on
/// success, 1 on a runtime failure and 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Ok(v) = std::env::var("LAS_SEED") {
        cfg.train.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config { line: 0, key: "LAS_SEED".into(), message: format!("cannot parse {v:?}") })?;
    }
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Features(a) => features(a, &cfg, jobs),
        Command::Augment(a) => augment(a, &cfg, jobs),
        Command::BpeLearn(a) => {
            let lines = transcripts(&a.source)?;
            let v = learn_bpe(lines.iter().map(String::as_str), a.size.unwrap_or(cfg.wordpieces))?;
            save_vocab(&a.out, &v)?;
            println!("{} pieces, {} merges", v.len(), v.merges().len());
            Ok(())
        }
        Command::BpeApply(a) => bpe_apply(a),
        Command::Train(a) => train(a, cfg, jobs, false),
        Command::MwerTrain(a) => train(a, cfg, jobs, true),
        Command::NgramBuild(a) => {
            let corpus: Vec<Vec<String>> =
                transcripts(&a.source)?.iter().map(|l| l.split_whitespace().map(str::to_string).collect()).collect();
            let lm = train_ngram(
                &corpus,
                a.order.unwrap_or(cfg.lm.ngram_order),
                a.discount.unwrap_or(cfg.lm.ngram_discount),
            )?;
            save_arpa(&a.out, &lm)?;
            println!("order {}, {} words", lm.order(), lm.vocab().len());
            Ok(())
        }
        Command::NnlmTrain(a) => {
            let vocab = load_vocab(&a.vocab)?;
            let sentences: Vec<Vec<u32>> = transcripts(&a.source)?.iter().map(|l| vocab.encode(l)).collect();
            let mut settings = cfg.lm.clone();
            if let Some(e) = a.epochs {
                settings.nnlm_epochs = e;
            }
            let lm_cfg = NeuralLmConfig { vocab_size: vocab.len(), ..settings.nnlm.clone() };
            let mut lm = NeuralLm::new(lm_cfg, &mut Prng::new(cfg.train.seed))?;
            for (e, loss) in train_nnlm(&mut lm, &sentences, &settings, cfg.train.seed)?.iter().enumerate() {
                println!("epoch {} loss {loss:.6}", e + 1);
            }
            save_params(&a.out, &lm.params, cfg.checkpoint_dtype)?;
            Ok(())
        }
        Command::Decode(a) => decode(a, cfg, jobs),
        Command::Rescore(a) => rescore(a, &cfg),
        Command::Wer(a) => {
            let refs = line_words(&a.reference)?;
            let hyps = line_words(&a.hyp)?;
            let r = wer_counts(&refs, &hyps)?;
            if r.ref_words == 0 {
                return Err(Failure::Run(las_core::Error::UndefinedMetric("references contain no words".into()).into()));
            }
            println!("{}", wer_line(&r));
            Ok(())
        }
    }
}

pub fn wer_line(r: &WerReport) -> String {
    format!(
        "WER {:.2}% [{} / {} words, {} sub, {} del, {} ins, {} utterances]",
        r.rate(),
        r.edits.total(),
        r.ref_words,
        r.edits.substitutions,
        r.edits.deletions,
        r.edits.insertions,
        r.utterances
    )
}

fn line_words(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_text(path)?.lines().map(|l| normalize_text(l).split(' ').filter(|w| !w.is_empty()).map(str::to_string).collect()).collect())
}

fn transcripts(src: &TextSource) -> CliResult<Vec<String>> {
    let lines: Vec<String> = match (&src.text, &src.manifest) {
        (Some(t), None) => read_text(t)?.lines().map(normalize_text).collect(),
        (None, Some(m)) => load_manifest(m)?.iter().map(|r| normalize_text(&r.text)).collect(),
        _ => return Err(Failure::Usage("one of --text and --manifest is required".into())),
    };
    Ok(lines.into_iter().filter(|l| !l.is_empty()).collect())
}

fn single_or_batch<'a>(
    input: &'a Option<PathBuf>,
    output: &'a Option<PathBuf>,
    manifest: &'a Option<PathBuf>,
    out_dir: &'a Option<PathBuf>,
) -> CliResult<std::result::Result<(&'a Path, &'a Path), (&'a Path, &'a Path)>> {
    match (input, output, manifest, out_dir) {
        (Some(i), Some(o), None, None) => Ok(Ok((i, o))),
        (None, None, Some(m), Some(d)) => Ok(Err((m, d))),
        _ => Err(Failure::Usage("give INPUT OUTPUT, or --manifest with --out-dir".into())),
    }
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn create_dir(d: &Path) -> Result<()> {
    std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))
}

fn features(a: FeaturesArgs, cfg: &Config, jobs: usize) -> CliResult {
    let mut fb = cfg.frontend.clone();
    fb.cmvn |= a.cmvn;
    match single_or_batch(&a.input, &a.output, &a.manifest, &a.out_dir)? {
        Ok((i, o)) => {
            let f = compute_fbank(&read_audio(i)?, &fb)?;
            save_features(o, &f)?;
            println!("{} frames", f.frames.rows());
        }
        Err((m, d)) => {
            let records = load_manifest(m)?;
            create_dir(d)?;
            let out = par_map(&records, jobs, |r| {
                let audio = r.audio.as_ref().ok_or_else(|| Error::invalid(format!("{}: no audio path", r.id)))?;
                let f = compute_fbank(&read_audio(audio)?, &fb)?;
                let name = format!("{}.fbnk", file_stem(&r.id));
                save_features(&d.join(&name), &f)?;
                Ok(ManifestRecord { id: r.id.clone(), audio: None, feats: Some(PathBuf::from(name)), text: r.text.clone() })
            })?;
            save_jsonl(&d.join("manifest.jsonl"), &out)?;
            println!("{} utterances", out.len());
        }
    }
    Ok(())
}

fn augment(a: AugmentArgs, cfg: &Config, jobs: usize) -> CliResult {
    match single_or_batch(&a.input, &a.output, &a.manifest, &a.out_dir)? {
        Ok((i, o)) => {
            let factor = a.factor.ok_or_else(|| Failure::Usage("--factor is required for a single file".into()))?;
            let w = speed_perturb(&read_audio(i)?, factor)?;
            write_audio(o, &w)?;
            println!("{} samples", w.samples.len());
        }
        Err((m, d)) => {
            let factors = a.factor.map_or_else(|| cfg.speed_factors.clone(), |f| vec![f]);
            let records = load_manifest(m)?;
            create_dir(d)?;
            let jobs_list: Vec<(&ManifestRecord, f64)> =
                records.iter().flat_map(|r| factors.iter().map(move |&f| (r, f))).collect();
            let out = par_map(&jobs_list, jobs, |(r, f)| {
                let audio = r.audio.as_ref().ok_or_else(|| Error::invalid(format!("{}: no audio path", r.id)))?;
                let w = speed_perturb(&read_audio(audio)?, *f)?;
                let id = format!("{}-sp{f}", r.id);
                let name = format!("{}.wav", file_stem(&id));
                write_audio(&d.join(&name), &w)?;
                Ok(ManifestRecord { id, audio: Some(PathBuf::from(name)), feats: None, text: r.text.clone() })
            })?;
            save_jsonl(&d.join("manifest.jsonl"), &out)?;
            println!("{} utterances", out.len());
        }
    }
    Ok(())
}

fn bpe_apply(a: BpeApplyArgs) -> CliResult {
    let vocab = load_vocab(&a.vocab)?;
    let mut out = String::new();
    for line in read_text(&a.text)?.lines() {
        if a.decode {
            let ids = line
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| Error::format(a.text.display().to_string(), format!("bad id {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            out.push_str(&vocab.decode(&ids)?);
        } else {
            let ids: Vec<String> = vocab.encode(&normalize_text(line)).iter().map(u32::to_string).collect();
            out.push_str(&ids.join(" "));
        }
        out.push('\n');
    }
    match a.out {
        Some(p) => write_atomic(&p, out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(())
}

fn load_model(path: &Path, cfg: &Config, vocab: &WordPieceVocab) -> Result<LasModel> {
    let params = load_params(path)?;
    let mc = infer_las_config(&params, cfg.model.location_aware, cfg.model.history)?;
    if mc.vocab_size != vocab.len() {
        return Err(Error::invalid(format!(
            "{}: model has {} outputs but the vocabulary has {} pieces",
            path.display(),
            mc.vocab_size,
            vocab.len()
        )));
    }
    Ok(LasModel::from_params(mc, params)?)
}

fn train(a: TrainArgs, mut cfg: Config, jobs: usize, mwer_only: bool) -> CliResult {
    let vocab = load_vocab(&a.vocab)?;
    if let Some(e) = a.epochs {
        if mwer_only {
            cfg.train.mwer_epochs = e;
        } else {
            cfg.train.epochs = e;
        }
    }
    let mut model = match &a.init {
        Some(p) => load_model(p, &cfg, &vocab)?,
        None if mwer_only => return Err(Failure::Usage("mwer-train needs --init".into())),
        None => init_model(&cfg, &vocab)?,
    };
    let dim = model.config.feature_dim;
    let train_set = load_corpus(&load_manifest(&a.manifest)?, &vocab, &cfg.frontend, dim, jobs)?;
    let val_set = match &a.val {
        Some(v) => load_corpus(&load_manifest(v)?, &vocab, &cfg.frontend, dim, jobs)?,
        None => Vec::new(),
    };
    let out = OutputDir::new(&a.out_dir, cfg.checkpoint_dtype)?;
    let mut trainer = Trainer::new(cfg.train.clone(), &model)?;
    if !mwer_only {
        for r in fit(&mut model, &mut trainer, &train_set, &val_set, Some(&out))? {
            println!("ce epoch {} lr {} train {:.6} val {:.6}", r.epoch, r.lr, r.train_loss, r.val_loss);
        }
    }
    if mwer_only || cfg.train.mwer_epochs > 0 {
        for r in fit_mwer(&mut model, &mut trainer, &vocab, &train_set, &val_set, Some(&out))? {
            println!("mwer epoch {} train {:.6} expected errors {:.6}", r.epoch, r.train_loss, r.val_loss);
        }
    }
    Ok(())
}

fn load_nnlm(path: &Path, vocab: &WordPieceVocab) -> Result<NeuralLm> {
    let params = load_params(path)?;
    let lc = infer_lm_config(&params)?;
    if lc.vocab_size != vocab.len() {
        return Err(Error::invalid(format!("{}: LM vocabulary {} != {}", path.display(), lc.vocab_size, vocab.len())));
    }
    Ok(NeuralLm::from_params(lc, params)?)
}

fn decode(a: DecodeArgs, mut cfg: Config, jobs: usize) -> CliResult {
    let vocab = load_vocab(&a.vocab)?;
    let model = load_model(&a.model, &cfg, &vocab)?;
    let b = &mut cfg.beam;
    if let Some(w) = a.beam {
        b.beam = w;
        if a.nbest.is_none() {
            b.nbest = b.nbest.min(w);
        }
    }
    if let Some(n) = a.nbest {
        b.nbest = n;
    }
    if let Some(l) = a.lm_weight {
        b.lm_weight = l;
    }
    if let Some(al) = a.length_alpha {
        b.length_alpha = al;
    }
    if a.lm.is_none() {
        b.lm_weight = 0.0;
    }
    b.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let lm = a.lm.as_ref().map(|p| load_nnlm(p, &vocab)).transpose()?;
    let data = load_corpus(&load_manifest(&a.manifest)?, &vocab, &cfg.frontend, model.config.feature_dim, jobs)?;
    let out = decode_corpus(&model, &vocab, &data, &cfg.beam, lm.as_ref(), jobs)?;
    save_jsonl(&a.out, &out.nbest)?;
    if let Some(h) = &a.hyp {
        let text: String = out.hypotheses.iter().map(|(id, t)| format!("{id}\t{t}\n")).collect();
        write_atomic(h, text.as_bytes())?;
    }
    match &out.report {
        Some(r) => println!("{}", wer_line(r)),
        None => println!("decoded {} utterances", data.len()),
    }
    Ok(())
}

fn rescore(a: RescoreArgs, cfg: &Config) -> CliResult {
    let vocab = load_vocab(&a.vocab)?;
    let records: Vec<NbestRecord> = load_jsonl(&a.nbest)?;
    let lambda = a.lm_weight.unwrap_or(cfg.beam.lm_weight);
    let (lm, default_level): (Box<dyn SentenceLm>, Level) = match (&a.arpa, &a.nnlm) {
        (Some(p), None) => (Box::new(load_arpa(p, cfg.lm.unk_penalty)?), Level::Word),
        (None, Some(p)) => (Box::new(load_nnlm(p, &vocab)?), Level::Wordpiece),
        _ => return Err(Failure::Usage("exactly one of --arpa and --nnlm is required".into())),
    };
    let level = match a.level.unwrap_or(default_level) {
        Level::Word => LmLevel::Word,
        Level::Wordpiece => LmLevel::WordPiece,
    };
    let mut out = Vec::with_capacity(records.len());
    let mut start = 0;
    while start < records.len() {
        let id = &records[start].id;
        let end = start + records[start..].iter().take_while(|r| &r.id == id).count();
        let group: Vec<Hypothesis> = records[start..end]
            .iter()
            .map(|r| Hypothesis {
                tokens: r.tokens.clone(),
                las_logp: r.las_logp,
                lm_logp: r.lm_logp,
                score: r.score,
                finished: r.tokens.last() == Some(&EOS),
            })
            .collect();
        let ranked = rescore_nbest(&group, &vocab, lm.as_ref(), lambda, level)?;
        out.extend(crate::pipeline::nbest_records(id, &ranked, &vocab));
        start = end;
    }
    save_jsonl(&a.out, &out)?;
    println!("rescored {} hypotheses", out.len());
    Ok(())
}
