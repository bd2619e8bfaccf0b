use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use marnn::experiment::ExperimentSpec;
use marnn::langs::{decode_set, encode, length_depth_histogram, Dataset, Sample, Task};
use marnn::models::{Checkpoint, Snapshot};
use marnn::trainer::{encode_dataset, evaluate, run_experiment, ExperimentInputs, RunReport};
use marnn::Error;

use crate::args::{EvalArgs, ExperimentArgs, ReportArgs, TraceArgs, TrainArgs};
use crate::config::{resolve, to_toml};
use crate::Fail;

fn data_err(context: impl std::fmt::Display) -> impl FnOnce(Error) -> Fail {
    move |e| Fail::Data(format!("{context}: {e}"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Fail> {
    fs::write(path, contents).map_err(|e| Fail::Data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Fail> {
    fs::create_dir_all(path).map_err(|e| Fail::Data(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<Dataset, Fail> {
    let text =
        fs::read_to_string(path).map_err(|e| Fail::Data(format!("{}: {e}", path.display())))?;
    Dataset::from_text(&text).map_err(data_err(path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Fail> {
    Checkpoint::load(path).map_err(data_err(path.display()))
}

/// `split,kind,value,count` rows for the length and depth distributions.
fn histogram_csv(datasets: &[&Dataset]) -> Result<String, Fail> {
    let mut out = String::from("split,kind,value,count\n");
    for ds in datasets {
        let (lengths, depths) = length_depth_histogram(ds).map_err(data_err("histogram"))?;
        for (kind, map) in [("length", lengths), ("depth", depths)] {
            for (v, c) in map {
                writeln!(out, "{},{kind},{v},{c}", ds.split).unwrap();
            }
        }
    }
    Ok(out)
}

fn with_fingerprint_header(spec: &ExperimentSpec, fingerprint: &str) -> String {
    format!("# fingerprint = \"{fingerprint}\"\n{}", to_toml(spec))
}

pub fn generate(args: &ExperimentArgs) -> Result<(), Fail> {
    let spec = resolve(args, Some("stack_rnn+softmax"))?;
    let (train, test) = spec.generate().map_err(data_err("generation"))?;
    create_dir(&args.out)?;
    write_file(&args.out.join("train.txt"), &train.to_text())?;
    write_file(&args.out.join("test.txt"), &test.to_text())?;
    let hist = histogram_csv(&[&train, &test])?;
    write_file(&args.out.join("histogram.csv"), &hist)?;
    write_file(
        &args.out.join("spec.toml"),
        &with_fingerprint_header(&spec, &spec.data_fingerprint()),
    )?;
    print!("{hist}");
    eprintln!(
        "{}: {} train and {} test samples written to {}",
        spec.task,
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}

fn load_or_generate(args: &TrainArgs, spec: &ExperimentSpec) -> Result<(Dataset, Dataset), Fail> {
    let (Some(train_path), Some(test_path)) = (&args.train_data, &args.test_data) else {
        return spec.generate().map_err(data_err("generation"));
    };
    let train = read_dataset(train_path)?;
    let test = read_dataset(test_path)?;
    let task = spec.task().map_err(|e| Fail::Usage(e.to_string()))?;
    for (ds, path) in [(&train, train_path), (&test, test_path)] {
        if ds.task != task {
            return Err(Fail::Data(format!(
                "{} holds task {} but the experiment is {task}",
                path.display(),
                ds.task
            )));
        }
        if ds.is_empty() {
            return Err(Fail::Data(format!("{} is empty", path.display())));
        }
    }
    Ok((train, test))
}

pub fn train(args: &TrainArgs) -> Result<(), Fail> {
    let spec = resolve(&args.experiment, None)?;
    let (train_ds, test_ds) = load_or_generate(args, &spec)?;
    // The datasets' own fingerprints cover files loaded from disk.
    let fingerprint = marnn::langs::fingerprint_of(&(
        spec.fingerprint(),
        &train_ds.fingerprint,
        &test_ds.fingerprint,
    ));
    let model = spec
        .model_config()
        .map_err(|e| Fail::Usage(e.to_string()))?;
    let label = spec.label();
    let train_config = spec.train_config();
    let experiment = run_experiment(&ExperimentInputs {
        label: &label,
        fingerprint: &fingerprint,
        model: &model,
        train: &train_ds,
        test: &test_ds,
        train_config: &train_config,
        seeds: &spec.seeds,
        workers: args.workers,
    })
    .map_err(|e| match e {
        Error::InvalidArgument(m) => Fail::Usage(m),
        e => Fail::Data(e.to_string()),
    })?;

    let out = &args.experiment.out;
    create_dir(out)?;
    write_file(
        &out.join("spec.toml"),
        &with_fingerprint_header(&spec, &fingerprint),
    )?;
    for run in &experiment.runs {
        if let Some(m) = &run.model {
            let ck = Checkpoint::new(&spec.task, run.result.seed, &fingerprint, m.clone());
            let json = ck.to_json().map_err(data_err("checkpoint"))?;
            write_file(&out.join(format!("seed-{}.json", run.result.seed)), &json)?;
        }
    }
    let report = &experiment.report;
    let table = RunReport::to_table(std::slice::from_ref(report));
    write_file(&out.join("report.csv"), &report.to_csv())?;
    write_file(
        &out.join("report.txt"),
        &format!("# fingerprint={fingerprint}\n{table}"),
    )?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    write_file(&out.join("report.json"), &json)?;
    print!("{table}");
    for s in &report.seeds {
        if let Some(f) = &s.failure {
            eprintln!("seed {} failed: {f}", s.seed);
        }
    }
    if report.failed_seeds() == report.seeds.len() {
        return Err(Fail::Numeric(format!(
            "all {} seeds diverged",
            report.seeds.len()
        )));
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), Fail> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let ds = read_dataset(&args.data)?;
    let task = Task::parse(&ck.task).map_err(data_err(args.checkpoint.display()))?;
    let (want, got) = (task.vocabulary(), ds.vocabulary());
    let config = &ck.model.config;
    if want != got || config.d_in != got.d_in() || config.d_out != got.d_out() {
        return Err(Fail::Data(format!(
            "vocabulary mismatch: checkpoint {want} vs dataset {got}"
        )));
    }
    if ds.is_empty() {
        return Err(Fail::Data(format!("{} is empty", args.data.display())));
    }
    let data = encode_dataset(&ds).map_err(data_err(args.data.display()))?;
    let accuracy = evaluate(&ck.model, &data, 0.5).map_err(data_err("evaluation"))?;
    println!("{accuracy:.2}");
    if let Some(path) = &args.out {
        let record = serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "split": ds.split.to_string(),
            "fingerprint": ck.fingerprint,
            "samples": ds.len(),
            "accuracy": accuracy,
        });
        write_file(
            path,
            &(serde_json::to_string_pretty(&record).expect("json") + "\n"),
        )?;
    }
    Ok(())
}

fn trace_csv(ck: &Checkpoint, input: &str, snapshot: Snapshot) -> Result<String, Fail> {
    let config = &ck.model.config;
    if !config.arch.has_memory() {
        return Err(Fail::Usage(format!(
            "{} has no external memory to trace",
            config.arch
        )));
    }
    let task = Task::parse(&ck.task).map_err(|e| Fail::Data(e.to_string()))?;
    let vocab = task.vocabulary();
    let chars: Vec<char> = input.chars().collect();
    if chars.is_empty() {
        return Err(Fail::Data("empty input".into()));
    }
    // Only the inputs matter here; targets are not needed for a trace.
    let sample = Sample::new(chars.clone(), vec![Vec::new(); chars.len()]);
    let encoded = encode(&sample, &vocab).map_err(data_err("input"))?;
    let (outputs, traces) = ck
        .model
        .run(&encoded.inputs, snapshot)
        .map_err(data_err("trace"))?;

    let m = config.mem_dim;
    let rows = traces
        .iter()
        .map(|t| t.snapshot.as_ref().map_or(0, Vec::len))
        .max()
        .unwrap_or(0);
    let rows = match snapshot {
        Snapshot::Rows(k) => k,
        _ => rows,
    };
    let cell = |i: usize, j: usize| {
        if m == 1 {
            format!("mem{i}")
        } else {
            format!("mem{i}.{j}")
        }
    };

    let mut out = format!(
        "# fingerprint={},task={},model={}\n",
        ck.fingerprint, ck.task, config.arch
    );
    let mut header = vec!["step".to_string(), "input".to_string()];
    header.extend(config.arch.action_names().iter().map(|s| s.to_string()));
    header.extend((0..m).map(|j| {
        if m == 1 {
            "inserted".into()
        } else {
            format!("inserted.{j}")
        }
    }));
    header.extend((0..rows).flat_map(|i| (0..m).map(move |j| cell(i, j))));
    header.push("predicted".into());
    writeln!(out, "{}", header.join(",")).unwrap();
    for (t, tr) in traces.iter().enumerate() {
        let mut row = vec![t.to_string(), chars[t].to_string()];
        row.extend(tr.actions.iter().map(f64::to_string));
        row.extend(tr.inserted.iter().map(f64::to_string));
        let snap = tr.snapshot.as_deref().unwrap_or(&[]);
        for i in 0..rows {
            for j in 0..m {
                // Stack rows past the stored depth are implicit zeros.
                let v = snap.get(i).map_or(0.0, |r| r[j]);
                row.push(v.to_string());
            }
        }
        let predicted: String = decode_set(&outputs[t], &vocab, 0.5)
            .iter()
            .map(char::to_string)
            .collect::<Vec<_>>()
            .join("/");
        row.push(predicted);
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    Ok(out)
}

pub fn trace(args: &TraceArgs) -> Result<(), Fail> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let snapshot = if args.full {
        Snapshot::Full
    } else {
        Snapshot::Rows(args.rows)
    };
    let csv = trace_csv(&ck, &args.input, snapshot)?;
    match &args.out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

pub fn report(args: &ReportArgs) -> Result<(), Fail> {
    let mut reports = Vec::new();
    for input in &args.inputs {
        let path = report_path(input);
        let text = fs::read_to_string(&path)
            .map_err(|e| Fail::Data(format!("{}: {e}", path.display())))?;
        let r: RunReport = serde_json::from_str(&text)
            .map_err(|e| Fail::Data(format!("{}: {e}", path.display())))?;
        reports.push(r);
    }
    let table = RunReport::to_table(&reports);
    print!("{table}");
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let csv: String = reports.iter().map(RunReport::to_csv).collect();
        write_file(&dir.join("combined.csv"), &csv)?;
        write_file(&dir.join("table.txt"), &table)?;
    }
    Ok(())
}
