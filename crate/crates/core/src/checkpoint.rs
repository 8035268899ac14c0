//! Checkpoint directories: one ATEN file per parameter plus `meta.json`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::tensor::{io, ParamSet};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<M> {
    kind: String,
    params: Vec<String>,
    meta: M,
}

fn file_name(name: &str) -> String {
    format!("{}.aten", name.replace('/', "_"))
}

pub fn save<M: Serialize>(dir: &Path, kind: &str, params: &ParamSet, meta: &M) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, t) in params.iter() {
        io::save(&dir.join(file_name(name)), t)?;
    }
    let env = Envelope {
        kind: kind.to_string(),
        params: params.names().to_vec(),
        meta,
    };
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&env)? + "\n",
    )?;
    Ok(())
}

pub fn load<M: DeserializeOwned>(dir: &Path, kind: &str) -> Result<(ParamSet, M)> {
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Err(Error::Checkpoint(format!(
            "{} not found",
            meta_path.display()
        )));
    }
    let env: Envelope<M> = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    if env.kind != kind {
        return Err(Error::Checkpoint(format!(
            "{} holds a {} checkpoint, expected {kind}",
            dir.display(),
            env.kind
        )));
    }
    let mut params = ParamSet::new();
    for name in env.params {
        let t = io::load(&dir.join(file_name(&name))).map_err(|e| {
            Error::Checkpoint(format!("{}: {e}", dir.join(file_name(&name)).display()))
        })?;
        params.push(name, t);
    }
    Ok((params, env.meta))
}
