//! Model checkpoints: every parameter and buffer of a [`ParamStore`] in the
//! dataset container format, plus a JSON config echo in the metadata.

use std::path::Path;

use eeg2image_tensor::{ParamStore, Tensor};

use crate::dataio::{read_container, write_container_atomic, Container};
use crate::error::{Error, Result};

pub const MODEL_KEY: &str = "model";
pub const CONFIG_KEY: &str = "config";

pub fn store_to_container(store: &ParamStore<f32>, model: &str, config_json: &str) -> Container {
    let mut c = Container::default();
    for (name, _, t) in store.iter() {
        c.push(name, t.clone());
    }
    c.metadata.insert(MODEL_KEY.into(), model.into());
    c.metadata.insert(CONFIG_KEY.into(), config_json.into());
    c
}

/// Overwrites every entry of `store` with the same-named array of `c`.
pub fn load_into_store(store: &mut ParamStore<f32>, c: &Container, model: &str) -> Result<()> {
    match c.metadata.get(MODEL_KEY) {
        Some(m) if m == model => {}
        other => {
            return Err(Error::Format(format!("checkpoint holds model {other:?}, expected {model:?}")));
        }
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let t: &Tensor<f32> = c.require(&name)?;
        if t.shape() != store.get(id).shape() {
            return Err(Error::Integrity(format!(
                "checkpoint array {name} has shape {:?}, model expects {:?}",
                t.shape(),
                store.get(id).shape()
            )));
        }
        *store.get_mut(id) = t.clone();
    }
    if c.arrays.len() != store.len() {
        return Err(Error::Integrity(format!(
            "checkpoint has {} arrays, model has {}",
            c.arrays.len(),
            store.len()
        )));
    }
    Ok(())
}

pub fn save_store(dir: &Path, store: &ParamStore<f32>, model: &str, config_json: &str) -> Result<()> {
    write_container_atomic(dir, &store_to_container(store, model, config_json))
}

/// Reads a checkpoint directory; returns the container for the caller to
/// rebuild the model from its config echo.
pub fn read_checkpoint(dir: &Path) -> Result<Container> {
    read_container(dir)
}

pub fn config_json(c: &Container) -> Result<&str> {
    c.metadata
        .get(CONFIG_KEY)
        .map(String::as_str)
        .ok_or_else(|| Error::Format("checkpoint has no config echo".into()))
}
