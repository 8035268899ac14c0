//! On-disk corpus: `corpus.json`, `manifest.jsonl` and one ATEN file per
//! waveform under `wav/`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusConfig};
use crate::asr::{Utterance, Vocab};
use crate::tensor::{io, Tensor};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: CorpusConfig,
    vocab: Vocab,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    utt_id: String,
    split: String,
    words: Vec<String>,
    n_frames: usize,
    wav_path: String,
    frame_labels: Vec<usize>,
}

impl Corpus {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("wav"))?;
        let header = Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        fs::write(
            dir.join("corpus.json"),
            serde_json::to_string_pretty(&header)? + "\n",
        )?;
        let mut out = BufWriter::new(fs::File::create(dir.join("manifest.jsonl"))?);
        for (split, utts) in [("train", &self.train), ("test", &self.test)] {
            for u in utts.iter() {
                let wav_path = format!("wav/{}.aten", u.id);
                io::save(&dir.join(&wav_path), &Tensor::from_vec(u.waveform.clone())?)?;
                let row = ManifestRow {
                    utt_id: u.id.clone(),
                    split: split.to_string(),
                    words: u.words.clone(),
                    n_frames: u.frame_labels.len(),
                    wav_path,
                    frame_labels: u.frame_labels.clone(),
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Loads and validates the collapsing invariant of every utterance.
    pub fn load(dir: &Path) -> Result<Self> {
        let header: Header = serde_json::from_str(&fs::read_to_string(dir.join("corpus.json"))?)?;
        let mut corpus = Corpus {
            config: header.config,
            vocab: header.vocab,
            train: Vec::new(),
            test: Vec::new(),
        };
        let reader = BufReader::new(fs::File::open(dir.join("manifest.jsonl"))?);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestRow = serde_json::from_str(&line)?;
            if row.frame_labels.len() != row.n_frames {
                return Err(Error::LengthMismatch(row.n_frames, row.frame_labels.len()));
            }
            let utt = Utterance {
                waveform: io::load(&dir.join(&row.wav_path))?.into_data(),
                id: row.utt_id,
                words: row.words,
                frame_labels: row.frame_labels,
            };
            match row.split.as_str() {
                "train" => corpus.train.push(utt),
                "test" => corpus.test.push(utt),
                other => return Err(Error::Config(format!("unknown split {other:?}"))),
            }
        }
        corpus.validate()?;
        Ok(corpus)
    }
}
