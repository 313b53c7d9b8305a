use std::path::{Path, PathBuf};

use can_ner::corpus::{
    build_vocab, gen_synthetic_with, parse_conll, parse_group_map, score, write_conll, CorpusError, Mode,
    ParseOptions, ScoreOptions, SegFallback, SyntheticConfig,
};
use can_ner::model::{
    evaluate, load, load_embeddings, save, save_with_optimizer, train_with_observer, write_atomic,
    BatchObjective,
};
use can_ner::numerics::{check_gradients, GradCheckOptions};
use can_ner::{LabelSet, Model, ModelConfig, Sentence};

use crate::error::CliError;
use crate::{AttnArgs, EvalArgs, GenArgs, GradcheckArgs, InputFlags, ModelFlags, TagArgs, TrainArgs};

fn parse_options(flags: &InputFlags) -> ParseOptions {
    ParseOptions {
        seg_fallback: if flags.require_seg { SegFallback::Require } else { SegFallback::Single },
        tag_mode: if flags.lenient_tags { Mode::Lenient } else { Mode::Strict },
    }
}

fn read_corpus(path: &Path, opts: ParseOptions) -> Result<Vec<Sentence>, CliError> {
    parse_conll(path, opts).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(write_atomic(path, text.as_bytes())?)
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_config(flags: &ModelFlags) -> Result<ModelConfig, CliError> {
    let mut c = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => ModelConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = flags.$field.clone() {
                c.$field = v;
            })*
        };
    }
    take!(arch, d_ch, d_h, k, lr, rho, eps, epochs, batch_size, seed, min_freq);
    c.mask_window_pads |= flags.mask_window_pads;
    c.constrained_decode |= flags.constrained_decode;
    c.freeze_embeddings |= flags.freeze_embeddings;
    if let Some(types) = &flags.types {
        c.label_set = LabelSet::bioes(types.iter().map(|t| t.trim()).filter(|t| !t.is_empty())).names();
    }
    c.validate()?;
    Ok(c)
}

fn default_metrics_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".metrics.tsv");
    PathBuf::from(name)
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.model_flags)?;
    let opts = parse_options(&args.input);
    let train_set = read_corpus(&args.train, opts)?;
    let dev = args.dev.as_deref().map(|p| read_corpus(p, opts)).transpose()?;
    let embeddings = args.embeddings.as_deref().map(load_embeddings).transpose()?;
    log::info!(
        "training {} on {} sentences ({} dev), {} epochs",
        config.arch,
        train_set.len(),
        dev.as_ref().map_or(0, Vec::len),
        config.epochs
    );

    let outcome = train_with_observer(&train_set, dev.as_deref(), &config, embeddings.as_ref(), &mut |e, _| {
        match e.dev_f1 {
            Some(f1) => log::info!("epoch {:>3}  loss {:.4}  dev F1 {f1:.2}", e.epoch, e.loss),
            None => log::info!("epoch {:>3}  loss {:.4}", e.epoch, e.loss),
        }
    })?;

    let metrics = args.metrics.clone().unwrap_or_else(|| default_metrics_path(&args.model));
    if args.save_optimizer {
        save_with_optimizer(&outcome.model, &args.model)?;
    } else {
        save(&outcome.model, &args.model)?;
    }
    write_text(&metrics, &outcome.log.to_tsv())?;
    log::info!("wrote {} and {}", args.model.display(), metrics.display());
    if let Some(dev) = &dev {
        let f1 = evaluate(&outcome.model, dev)?.f1();
        println!("dev F1 {f1:.2} (epoch {})", outcome.log.selected_epoch);
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn tag(args: TagArgs) -> Result<(), CliError> {
    let mut model = load_model(&args.model)?;
    if args.constrained_decode {
        model.set_constrained_decode(true);
    }
    let sentences = read_corpus(&args.input, parse_options(&args.input_flags))?;
    for (i, s) in sentences.iter().enumerate() {
        if let Some(gold) = &s.gold {
            model.labels.encode(gold).map_err(|e| CliError::Data(format!("sentence {i}: {e}")))?;
        }
    }
    let predicted = sentences
        .iter()
        .map(|s| model.predict(s))
        .collect::<Result<Vec<_>, _>>()?;
    write_text(&args.output, &write_conll(&sentences, Some(&predicted), true))?;
    log::info!("tagged {} sentences", sentences.len());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let gold = read_corpus(&args.gold, ParseOptions::default())?;
    let pred = read_corpus(&args.pred, ParseOptions { tag_mode: Mode::Lenient, ..Default::default() })?;
    if gold.len() != pred.len() {
        return Err(CorpusError::Misaligned {
            sentence: gold.len().min(pred.len()),
            message: format!("{} gold sentences vs {} predicted", gold.len(), pred.len()),
        }
        .into());
    }
    let mut tags = Vec::with_capacity(pred.len());
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.chars != p.chars {
            return Err(CorpusError::Misaligned { sentence: i, message: "characters differ".into() }.into());
        }
        tags.push(p.gold.ok_or(CorpusError::Unlabeled { sentence: i })?);
    }
    let mut report = score(&gold, &tags, ScoreOptions::default())?;
    if let Some(path) = &args.groups {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        report = report.with_groups(&parse_group_map(&text)?);
    }
    let text = if args.json { report.to_json() + "\n" } else { report.to_kv_text() };
    match &args.output {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn attn(args: AttnArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let sentences = read_corpus(&args.input, ParseOptions { tag_mode: Mode::Lenient, ..Default::default() })?;
    let limit = args.limit.unwrap_or(sentences.len());
    let traces = sentences
        .iter()
        .take(limit)
        .enumerate()
        .map(|(i, s)| model.attention(s, i).map(|t| t.to_json()))
        .collect::<Result<Vec<_>, _>>()?;
    let doc = serde_json::json!({
        "arch": model.config.arch.as_str(),
        "k": model.config.k,
        "sentences": traces,
    });
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n";
    write_text(&args.output, &text)?;
    log::info!("exported attention for {} sentences", traces.len());
    Ok(())
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.entity_rate) {
        return Err(CliError::Usage(format!("--entity-rate must be in [0, 1], got {}", args.entity_rate)));
    }
    let cfg = SyntheticConfig { slots: args.slots, entity_rate: args.entity_rate, ..Default::default() };
    let corpus = gen_synthetic_with(args.seed, args.n, &cfg);
    write_text(&args.output, &write_conll(&corpus, None, true))
}

pub fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if !(args.tol > 0.0 && args.step > 0.0) {
        return Err(CliError::Usage("--tol and --step must be positive".into()));
    }
    let corpus = gen_synthetic_with(args.seed, 2, &SyntheticConfig { slots: 1, entity_rate: 1.0, max_entity_len: 2 });
    let config = ModelConfig { arch: args.arch, d_ch: args.d_ch, d_h: args.d_h, k: args.k, seed: args.seed, ..Default::default() };
    config.validate()?;
    let mut model = Model::new(config, build_vocab(&corpus, 1), LabelSet::from_corpus(&corpus))?;
    let opts = GradCheckOptions { step: args.step, tol: args.tol, max_elements: args.max_elements, ..Default::default() };
    let report = check_gradients(&mut BatchObjective { model: &mut model, batch: &corpus }, opts);
    for p in &report.params {
        println!("{:<24} {:>6} {:>12.3e}", p.name, p.checked, p.max_rel_error);
    }
    if report.passed() {
        println!("all {} parameters within {:.0e}", report.params.len(), args.tol);
        Ok(())
    } else {
        let failed: Vec<&str> = report.failures().map(|p| p.name.as_str()).collect();
        Err(CliError::Numeric(format!("gradient check above {:.0e} for {}", args.tol, failed.join(", "))))
    }
}
