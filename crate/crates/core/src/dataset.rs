//! On-disk dataset layout shared by `gen-data`, `train` and `eval`:
//!
//! ```text
//! <dir>/labels.csv        id,label,class
//! <dir>/images/<id>.png
//! <dir>/masks/<id>.png    8-bit, foreground 255
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageRgb;
use crate::nn::LabeledImage;
use crate::synth::SyntheticSample;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub id: String,
    pub label: usize,
    pub class: String,
}

pub fn sample_id(i: usize) -> String {
    format!("{i:05}")
}

pub fn save_dataset(dir: &Path, samples: &[SyntheticSample], class_names: &[String]) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    for (i, s) in samples.iter().enumerate() {
        let id = sample_id(i);
        s.image.save(dir.join("images").join(format!("{id}.png")))?;
        s.mask.save(dir.join("masks").join(format!("{id}.png")))?;
        let class = class_names.get(s.label).cloned().unwrap_or_default();
        w.serialize(LabelRow { id, label: s.label, class })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(dir: &Path) -> Result<Vec<LabelRow>> {
    let mut r = csv::Reader::from_path(dir.join("labels.csv"))?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<LabelRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

/// Class names indexed by label, taken from `labels.csv`.
pub fn class_names(rows: &[LabelRow]) -> Result<Vec<String>> {
    let n = rows.iter().map(|r| r.label + 1).max().unwrap_or(0);
    let mut names = vec![None; n];
    for r in rows {
        match &names[r.label] {
            None => names[r.label] = Some(r.class.clone()),
            Some(c) if *c != r.class => {
                return Err(Error::InvalidInput(format!(
                    "label {} is named both `{c}` and `{}`",
                    r.label, r.class
                )))
            }
            _ => {}
        }
    }
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.unwrap_or_else(|| format!("class{i}")))
        .collect())
}

pub fn load_labeled(dir: &Path) -> Result<(Vec<LabeledImage>, Vec<String>)> {
    let rows = read_labels(dir)?;
    let names = class_names(&rows)?;
    let samples = rows
        .iter()
        .map(|r| {
            Ok(LabeledImage {
                image: ImageRgb::load(dir.join("images").join(format!("{}.png", r.id)))?,
                label: r.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::synth::{self, generate_dataset};

    #[test]
    fn saved_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_dataset(5, 3, 32, 9, Execution::Sequential).unwrap();
        let names = synth::class_names(3);
        save_dataset(dir.path(), &samples, &names).unwrap();
        let (loaded, back_names) = load_labeled(dir.path()).unwrap();
        assert_eq!(loaded.len(), 5);
        for (a, b) in loaded.iter().zip(&samples) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.image.to_rgb8(), b.image.to_rgb8());
        }
        assert_eq!(back_names, names);
    }
}
