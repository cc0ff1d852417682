use std::collections::BTreeMap;
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use handpass::codec::{read_capture_with, ReadOptions};
use handpass::dataset::{
    read_csv, rows_from_manifest, slice_dataset, write_csv, Hand, SliceOptions,
};
use handpass::dsp::{apply_scaler, fit_scaler};
use handpass::gatekeeper::{
    authenticate, enroll, serve, AuditLog, AuthPolicy, EnrollConfig, EnrollmentStore, Gatekeeper,
};
use handpass::learners::{
    cross_validate, feature_importance, select_subcarriers, train, CvOptions, CvReport,
};
use handpass::synth::{generate, Manifest, SynthConfig};
use handpass::{
    read_capture, CsiFrame, FeatureMatrix, FramePipeline, HyperParams, SanitizerConfig,
};

use crate::report;
use crate::{
    AuthArgs, Cli, CliError, Command, CrossvalArgs, DatasetArgs, EnrollArgs, InspectArgs,
    ModelArgs, PipelineArgs, RevokeArgs, SelectArgs, ServeArgs, SynthArgs, TrainArgs,
};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Inspect(a) => inspect(a),
        Command::Dataset(a) => dataset(a),
        Command::Crossval(a) => crossval(a, cli.seed),
        Command::Train(a) => train_model(a, cli.seed),
        Command::Select(a) => select(a, cli.seed),
        Command::Enroll(a) => enroll_users(a, cli.seed),
        Command::Revoke(a) => revoke(a),
        Command::Auth(a) => auth(a),
        Command::Serve(a) => serve_forever(a),
    }
}

fn hyper(p: &ModelArgs) -> HyperParams {
    let mut h = HyperParams::default();
    h.forest.n_trees = p.trees;
    h.forest.tree.max_depth = p.max_depth;
    h.tree.max_depth = p.max_depth;
    h.knn_k = p.knn_k;
    h
}

fn pipeline(p: &PipelineArgs) -> FramePipeline {
    FramePipeline {
        prune: !p.no_prune,
        normalize: !p.no_normalize,
        sanitize: !p.no_sanitize,
        sanitizer: SanitizerConfig {
            lambda: p.lambda,
            ..SanitizerConfig::default()
        },
        ..FramePipeline::default()
    }
}

fn synth(a: &SynthArgs, seed: u64) -> Result<(), CliError> {
    let mut cfg = if a.scaled {
        SynthConfig::scaled_protocol()
    } else {
        SynthConfig::default()
    };
    cfg.seed = seed;
    cfg.left_hand = a.left_hand;
    if let Some(v) = a.users {
        cfg.users = v;
    }
    if let Some(v) = a.captures {
        cfg.captures_per_user = v;
    }
    if let Some(v) = a.frames {
        cfg.frames_per_capture = v;
    }
    if let Some(v) = a.rate {
        cfg.packets_per_second = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.burst_probability {
        cfg.burst_probability = v;
    }
    if let Some(v) = a.burst_power {
        cfg.burst_power = v;
    }
    let manifest = generate(&cfg, &a.out)?;
    println!(
        "wrote {} captures ({} frames each) to {}",
        manifest.entries.len(),
        cfg.frames_per_capture,
        a.out.display()
    );
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<(), CliError> {
    let opts = ReadOptions {
        strict: a.strict,
        ..ReadOptions::default()
    };
    let capture = read_capture_with(&a.capture, &opts)?;
    println!("{capture}");
    if let (Some(first), Some(last)) = (capture.frames.first(), capture.frames.last()) {
        let mac = first
            .source_mac
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<Vec<_>>()
            .join(":");
        println!(
            "source {mac}, chanspec {:#06x}, chip {:#06x}, sequence {}..{}",
            first.chanspec, first.chip_version, first.sequence_number, last.sequence_number
        );
        let pipeline = FramePipeline::default();
        let usable = capture
            .frames
            .iter()
            .filter(|f| pipeline.features(f).is_ok())
            .count();
        println!("{usable} of {} frames carry signal", capture.frames.len());
    }
    Ok(())
}

fn dataset(a: &DatasetArgs) -> Result<(), CliError> {
    let pipeline = pipeline(&a.pipeline);
    let (rows, manifest) = rows_from_manifest(&a.input, &pipeline)?;
    let opts = SliceOptions {
        packets_per_second: manifest.packets_per_second,
        right_hand_only: !a.both_hands,
    };
    let mut slice = slice_dataset(&rows, pipeline.feature_names(), a.slice, opts)?;
    if let Some(kind) = a.scaler.kind() {
        let scaler = fit_scaler(kind, &slice.matrix.rows)?;
        slice.matrix.rows = apply_scaler(&scaler, &slice.matrix.rows)?;
    }
    write_csv(&slice.matrix, &a.out)?;
    println!(
        "{}: {} rows x {} features from captures {:?} ({} s each) -> {}",
        slice.name,
        slice.matrix.len(),
        slice.matrix.width(),
        slice.captures_used,
        slice.seconds_per_capture,
        a.out.display()
    );
    Ok(())
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn capture_groups(m: &FeatureMatrix) -> Vec<u64> {
    m.meta
        .iter()
        .map(|meta| {
            let hand = u64::from(meta.hand == Hand::Left);
            (u64::from(meta.user_id) << 16) | (hand << 8) | u64::from(meta.capture)
        })
        .collect()
}

fn crossval(a: &CrossvalArgs, seed: u64) -> Result<(), CliError> {
    let per_fold_scaler = match a.per_fold_scaler {
        Some(s) => s.kind(),
        None => None,
    };
    let mut results: Vec<(String, CvReport)> = Vec::new();
    for path in &a.data {
        let matrix = read_csv(path)?;
        let labels = matrix.labels();
        let groups = a.group_by_capture.then(|| capture_groups(&matrix));
        let name = dataset_label(path);
        for &kind in &a.model {
            let opts = CvOptions {
                folds: a.k,
                seed,
                hyper: hyper(&a.params),
                averaging: a.averaging.into(),
                per_fold_scaler,
                groups: groups.as_deref(),
            };
            log::info!("{name}: {kind} with {} folds", a.k);
            let r = cross_validate(kind, &matrix.rows, &labels, &opts)?;
            results.push((name.clone(), r));
        }
    }
    print!("{}", report::metrics_table(&results));
    if let Some(p) = &a.report {
        report::write_metrics_csv(&results, p)?;
    }
    if let Some(p) = &a.slice_report {
        report::write_slice_csv(&results, &a.model, p)?;
    }
    if let Some(p) = &a.json {
        report::write_json(&results, p)?;
    }
    Ok(())
}

fn train_model(a: &TrainArgs, seed: u64) -> Result<(), CliError> {
    let matrix = read_csv(&a.data)?;
    let labels = matrix.labels();
    let model = train(a.model, &matrix.rows, &labels, &hyper(&a.params), seed)?;
    let predicted = model.predict(&matrix.rows)?;
    let right = predicted
        .iter()
        .zip(&labels)
        .filter(|(p, t)| p == t)
        .count();
    model.save(&a.out)?;
    println!(
        "{} on {} rows, {} classes, training accuracy {:.4} -> {}",
        a.model,
        matrix.len(),
        model.classes.len(),
        right as f64 / labels.len() as f64,
        a.out.display()
    );
    Ok(())
}

fn select(a: &SelectArgs, seed: u64) -> Result<(), CliError> {
    let matrix = read_csv(&a.data)?;
    let model = train(
        a.model,
        &matrix.rows,
        &matrix.labels(),
        &hyper(&a.params),
        seed,
    )?;
    let importances = feature_importance(&model)?;
    let top = select_subcarriers(&importances, &matrix.feature_names, a.top)?;
    println!(
        "top {} subcarriers: {}",
        top.len(),
        top.iter().map(i32::to_string).collect::<Vec<_>>().join(",")
    );
    if let Some(p) = &a.out {
        report::write_importances(&matrix.feature_names, &importances, p)?;
    }
    Ok(())
}

fn enroll_users(a: &EnrollArgs, seed: u64) -> Result<(), CliError> {
    let mut frames: BTreeMap<u32, Vec<CsiFrame>> = BTreeMap::new();
    let rate = if let Some(dir) = &a.input {
        let manifest = Manifest::load(dir)?;
        for e in &manifest.entries {
            let m = e.meta;
            if m.hand != Hand::Right || m.capture != a.capture {
                continue;
            }
            if !a.users.is_empty() && !a.users.contains(&m.user_id) {
                continue;
            }
            frames.insert(m.user_id, read_capture(dir.join(&e.path))?.frames);
        }
        a.rate.unwrap_or(manifest.packets_per_second)
    } else {
        for (user, path) in &a.pcap {
            frames
                .entry(*user)
                .or_default()
                .extend(read_capture(path)?.frames);
        }
        a.rate
            .ok_or_else(|| CliError::Invalid("--rate is required with --pcap".into()))?
    };
    let scaler = a
        .scaler
        .kind()
        .ok_or_else(|| CliError::Invalid("enrollment needs a scaler".into()))?;
    let cfg = EnrollConfig {
        model: a.model,
        scaler,
        hyper: hyper(&a.params),
        packets_per_second: rate,
        permissions: a.permission.iter().cloned().collect(),
        ..EnrollConfig::default()
    };
    let store = enroll(&frames, &cfg, seed)?;
    store.save(&a.out)?;
    println!(
        "enrolled users {:?} with {} -> {}",
        store.roster.keys().collect::<Vec<_>>(),
        a.model,
        a.out.display()
    );
    Ok(())
}

fn revoke(a: &RevokeArgs) -> Result<(), CliError> {
    let mut store = EnrollmentStore::load(&a.store)?;
    for &user in &a.user {
        if !store.revoke(user) {
            log::warn!("user {user} is not on the roster");
        }
    }
    store.save(&a.store)?;
    println!(
        "store version {}, roster {:?}",
        store.version,
        store.roster.keys().collect::<Vec<_>>()
    );
    Ok(())
}

fn auth(a: &AuthArgs) -> Result<(), CliError> {
    let store = EnrollmentStore::load(&a.store)?;
    let capture = read_capture(&a.capture)?;
    let policy = AuthPolicy {
        window_seconds: a.window,
        threshold: a.threshold,
        permission: a.permission.clone(),
    };
    let decision = authenticate(&store, &capture.frames, &policy)?;
    if let Some(p) = &a.audit {
        let log = AuditLog::open(p)?;
        log.append(&decision)?;
        log.flush()?;
    }
    let text = serde_json::to_string(&decision)
        .map_err(|e| CliError::Invalid(format!("cannot encode decision: {e}")))?;
    println!("{text}");
    Ok(())
}

fn serve_forever(a: &ServeArgs) -> Result<(), CliError> {
    let store = a.store.as_ref().map(EnrollmentStore::load).transpose()?;
    let audit = a.audit.as_ref().map(AuditLog::open).transpose()?;
    let listener = TcpListener::bind(&a.listen).map_err(|source| CliError::Io {
        context: format!("cannot bind {}", a.listen),
        source,
    })?;
    let shutdown = Arc::new(AtomicBool::new(false));
    for signal in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        signal_hook::flag::register(signal, Arc::clone(&shutdown)).map_err(|source| {
            CliError::Io {
                context: "cannot install signal handler".into(),
                source,
            }
        })?;
    }
    let addr = listener.local_addr().map_err(|source| CliError::Io {
        context: "listener has no address".into(),
        source,
    })?;
    println!("listening on {addr}");
    serve(listener, Arc::new(Gatekeeper::new(store, audit)), shutdown)?;
    println!("stopped");
    Ok(())
}
