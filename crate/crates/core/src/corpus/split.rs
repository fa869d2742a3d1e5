use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{io_err, tokenize, Result, Vocab};

pub type Sentence = Vec<String>;

/// Train/valid/test sentences. On disk: `train.txt`, `valid.txt`,
/// `test.txt`, one space-joined sentence per line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Sentence>,
    pub valid: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl CorpusSplit {
    pub fn parts(&self) -> [(&'static str, &[Sentence]); 3] {
        [("train", &self.train), ("valid", &self.valid), ("test", &self.test)]
    }

    pub fn token_count(&self) -> usize {
        self.parts()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .map(|s| s.len() + 1)
            .sum()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, sentences) in self.parts() {
            let path = dir.join(format!("{name}.txt"));
            let mut text = String::new();
            for s in sentences {
                text.push_str(&s.join(" "));
                text.push('\n');
            }
            std::fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<CorpusSplit> {
        let read = |name: &str| -> Result<Vec<Sentence>> {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok(text.lines().map(tokenize).filter(|s| !s.is_empty()).collect())
        };
        Ok(CorpusSplit {
            train: read("train")?,
            valid: read("valid")?,
            test: read("test")?,
        })
    }

    pub fn encode(&self, vocab: &Vocab) -> EncodedCorpus {
        EncodedCorpus {
            train: vocab.encode_sentences(&self.train),
            valid: vocab.encode_sentences(&self.valid),
            test: vocab.encode_sentences(&self.test),
        }
    }
}

/// Token-id streams with an end-of-sentence id after every sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: Vec<u32>,
}

/// Inserts every augmentation sentence once into the training split at
/// seed-determined positions. Base sentences keep their relative order;
/// valid and test are untouched.
pub fn augment_corpus(base: &CorpusSplit, sentences: &[Sentence], seed: u64) -> CorpusSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = base.train.len();
    // Each addition lands in one of the n+1 gaps between base sentences.
    let mut placed: Vec<(usize, usize)> = sentences
        .iter()
        .enumerate()
        .map(|(k, _)| (rng.gen_range(0..=n), k))
        .collect();
    placed.sort_unstable();

    let mut train = Vec::with_capacity(n + sentences.len());
    let mut next = placed.into_iter().peekable();
    for gap in 0..=n {
        while let Some(&(pos, k)) = next.peek() {
            if pos != gap {
                break;
            }
            train.push(sentences[k].clone());
            next.next();
        }
        if gap < n {
            train.push(base.train[gap].clone());
        }
    }
    CorpusSplit {
        train,
        valid: base.valid.clone(),
        test: base.test.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn sentence(k: usize) -> Sentence {
        vec![format!("w{k}"), ".".into()]
    }

    fn counts(s: &[Sentence]) -> HashMap<Sentence, usize> {
        let mut m = HashMap::new();
        for x in s {
            *m.entry(x.clone()).or_default() += 1;
        }
        m
    }

    #[test]
    fn multiset_is_preserved() {
        let base = CorpusSplit {
            train: (0..100).map(sentence).collect(),
            valid: vec![sentence(1000)],
            test: vec![sentence(2000)],
        };
        let additions: Vec<Sentence> = (0..864).map(|k| sentence(k % 50 + 500)).collect();
        let out = augment_corpus(&base, &additions, 5);
        assert_eq!(out.train.len(), 964);
        let mut expected = counts(&base.train);
        for (k, v) in counts(&additions) {
            *expected.entry(k).or_default() += v;
        }
        assert_eq!(counts(&out.train), expected);
        assert_eq!(out.valid, base.valid);
        assert_eq!(out.test, base.test);
        // base order is kept
        let kept: Vec<Sentence> = out.train.iter().filter(|s| base.train.contains(s)).cloned().collect();
        assert_eq!(kept, base.train);
        assert_eq!(augment_corpus(&base, &additions, 5), out);
        assert_ne!(augment_corpus(&base, &additions, 6), out);
    }

    #[test]
    fn empty_augmentation_is_identity() {
        let base = CorpusSplit {
            train: (0..10).map(sentence).collect(),
            ..Default::default()
        };
        assert_eq!(augment_corpus(&base, &[], 1), base);
    }

    #[test]
    fn directory_round_trip() {
        let split = CorpusSplit {
            train: vec![vec!["Mary".into(), "ran".into(), ".".into()]],
            valid: vec![vec!["It".into(), "is".into(), ",".into()]],
            test: vec![vec!["a".into()]],
        };
        let dir = tempfile::tempdir().unwrap();
        split.write_dir(dir.path()).unwrap();
        assert_eq!(CorpusSplit::read_dir(dir.path()).unwrap(), split);
    }
}
