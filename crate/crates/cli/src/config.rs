use std::fs;

use marnn::experiment::ExperimentSpec;
use toml::{Table, Value};

use crate::args::{parse_seeds, ExperimentArgs};
use crate::Fail;

fn lookup_str(file: &Table, key: &str) -> Result<Option<String>, Fail> {
    match file.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(v) => Err(Fail::Usage(format!(
            "config key {key} must be a string, got {v}"
        ))),
    }
}

/// Overlays `top` onto `base`, descending into nested tables.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Preset for the task and model, then the config file, then flags.
/// `default_model` fills in the variant for commands that do not train.
pub fn resolve(args: &ExperimentArgs, default_model: Option<&str>) -> Result<ExperimentSpec, Fail> {
    let file: Table = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
            text.parse()
                .map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    let task = match &args.task {
        Some(t) => t.clone(),
        None => lookup_str(&file, "task")?
            .ok_or_else(|| Fail::Usage("no task given (--task or config)".into()))?,
    };
    let model = match &args.model {
        Some(m) => m.clone(),
        None => match (lookup_str(&file, "model")?, default_model) {
            (Some(m), _) => m,
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(Fail::Usage("no model given (--model or config)".into())),
        },
    };
    let preset = ExperimentSpec::preset(&task, &model).map_err(|e| Fail::Usage(e.to_string()))?;
    let mut table = Table::try_from(&preset).map_err(|e| Fail::Usage(e.to_string()))?;
    merge(&mut table, file);
    table.insert("task".into(), Value::String(task));
    table.insert("model".into(), Value::String(model));
    let mut spec: ExperimentSpec = table
        .try_into()
        .map_err(|e: toml::de::Error| Fail::Usage(e.to_string()))?;

    if let Some(s) = &args.seeds {
        spec.seeds = parse_seeds(s).map_err(Fail::Usage)?;
    }
    macro_rules! apply {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = args.$flag { spec.$($field).+ = v; })*
        };
    }
    apply!(
        hidden => hidden,
        mem_dim => mem_dim,
        mem_slots => memory_slots,
        lr => lr,
        epochs => epochs,
        train_count => train.count,
        test_count => test.count,
        data_seed => data_seed,
    );
    if args.tau.is_some() {
        spec.tau = args.tau;
    }
    if args.no_clip {
        spec.clip_norm = None;
    }
    spec.validate().map_err(|e| Fail::Usage(e.to_string()))?;
    Ok(spec)
}

pub fn to_toml(spec: &ExperimentSpec) -> String {
    toml::to_string(spec).expect("spec serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn args() -> ExperimentArgs {
        ExperimentArgs {
            config: None,
            task: None,
            model: None,
            seeds: None,
            tau: None,
            hidden: None,
            mem_dim: None,
            mem_slots: None,
            lr: None,
            epochs: None,
            train_count: None,
            test_count: None,
            data_seed: None,
            no_clip: false,
            out: PathBuf::from("out"),
        }
    }

    #[test]
    fn flags_override_file_override_preset() {
        let dir = std::env::temp_dir().join(format!("marnn-config-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.toml");
        fs::write(
            &path,
            "task = \"dyck2\"\nmodel = \"baby_ntm+gumbel_softmax\"\ntau = 0.5\nhidden = 10\nepochs = 2\n[train]\ncount = 50\n",
        )
        .unwrap();
        let mut a = args();
        a.config = Some(path.clone());
        a.hidden = Some(6);
        a.no_clip = true;
        let spec = resolve(&a, None).unwrap();
        assert_eq!(spec.model, "baby_ntm+gumbel_softmax");
        assert_eq!((spec.hidden, spec.epochs, spec.tau), (6, 2, Some(0.5)));
        assert_eq!(
            (spec.train.count, spec.train.max_len, spec.test.count),
            (50, 50, 5000)
        );
        assert_eq!(spec.clip_norm, None);

        let echoed: ExperimentSpec = toml::from_str(&to_toml(&spec)).unwrap();
        assert_eq!(echoed, spec);

        fs::write(
            &path,
            "task = \"dyck2\"\nmodel = \"vanilla_rnn\"\nhiden = 3\n",
        )
        .unwrap();
        assert!(matches!(resolve(&a, None), Err(Fail::Usage(_))));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn missing_task_or_model_is_a_usage_error() {
        assert!(matches!(resolve(&args(), None), Err(Fail::Usage(_))));
        let mut a = args();
        a.task = Some("reversal".into());
        assert!(resolve(&a, None).is_err());
        assert_eq!(
            resolve(&a, Some("vanilla_rnn")).unwrap().model,
            "vanilla_rnn"
        );
        a.model = Some("stack_rnn+softmax_temp".into());
        assert!(resolve(&a, None).is_err());
    }
}
