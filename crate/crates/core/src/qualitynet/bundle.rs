use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PredictorConfig, QualityHead, QualityPredictor};
use crate::degrade::QualityTaxonomy;
use crate::error::{Error, Result};
use crate::neuralnet::{load_checkpoint, save_checkpoint};

/// Contents of `predictor.json` in a bundle directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorFile {
    pub config: PredictorConfig,
    pub taxonomy: QualityTaxonomy,
}

pub const PREDICTOR_FILE: &str = "predictor.json";

const NETS: [&str; 3] = [QualityHead::Type.file_name(), QualityHead::ALL[1].file_name(), QualityHead::ALL[2].file_name()];

pub fn save_predictor(p: &QualityPredictor, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (name, net) in NETS.iter().zip([&p.type_net, &p.bj_net, &p.bl_net]) {
        save_checkpoint(net, dir.join(name))?;
    }
    write_predictor_file(&PredictorFile { config: p.config.clone(), taxonomy: p.taxonomy.clone() }, dir)
}

pub fn write_predictor_file(file: &PredictorFile, dir: impl AsRef<Path>) -> Result<()> {
    fs::write(dir.as_ref().join(PREDICTOR_FILE), serde_json::to_string_pretty(file)? + "\n")?;
    Ok(())
}

pub fn load_predictor(dir: impl AsRef<Path>) -> Result<QualityPredictor> {
    let dir = dir.as_ref();
    let missing = |name: &str| Error::UntrainedModel(format!("{} not found", dir.join(name).display()));
    let json = fs::read_to_string(dir.join(PREDICTOR_FILE)).map_err(|_| missing(PREDICTOR_FILE))?;
    let file: PredictorFile = serde_json::from_str(&json)?;
    let mut nets = Vec::with_capacity(3);
    for name in NETS {
        let path = dir.join(name);
        if !path.exists() {
            return Err(missing(name));
        }
        nets.push(load_checkpoint(path)?);
    }
    let bl = nets.pop().unwrap();
    let bj = nets.pop().unwrap();
    let ty = nets.pop().unwrap();
    QualityPredictor::new(file.config, file.taxonomy, ty, bj, bl)
}
