use std::collections::HashMap;
use std::path::Path;

use super::{io_err, CorpusError, Result};

pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token ↔ id map. Id 0 is the end-of-sentence marker, id 1 the
/// unknown-word marker; the rest follow descending corpus frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub const EOS: u32 = 0;
    pub const UNK: u32 = 1;

    /// Keeps the `max_size - 2` most frequent tokens; frequency ties go to
    /// the lexicographically smaller token.
    pub fn build<I, S>(sentences: I, max_size: usize) -> Result<Vocab>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        if max_size < 2 {
            return Err(CorpusError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for sentence in sentences {
            for token in sentence.as_ref() {
                *counts.entry(token.clone()).or_default() += 1;
            }
        }
        counts.remove(EOS_TOKEN);
        counts.remove(UNK_TOKEN);
        if counts.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - 2);
        let tokens = [EOS_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(Self::UNK)
    }

    pub fn decode(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Concatenates the sentences, each followed by the end-of-sentence id.
    pub fn encode_sentences<S: AsRef<[String]>>(&self, sentences: &[S]) -> Vec<u32> {
        let mut out = Vec::new();
        for s in sentences {
            out.extend(s.as_ref().iter().map(|t| self.encode(t)));
            out.push(Self::EOS);
        }
        out
    }

    /// One token per line, ordered by id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Vocab> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Vocab> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 2 || tokens[0] != EOS_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(CorpusError::BadVocab(format!(
                "expected `{EOS_TOKEN}` and `{UNK_TOKEN}` on the first two lines"
            )));
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(CorpusError::BadVocab("duplicate token".into()));
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn cutoff_keeps_most_frequent() {
        let v = Vocab::build([words("a a b")], 3).unwrap();
        assert_eq!(v.tokens(), [EOS_TOKEN, UNK_TOKEN, "a"]);
        assert_eq!(v.encode("b"), Vocab::UNK);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocab::build([words("b b a a")], 3).unwrap();
        assert_eq!(v.tokens(), [EOS_TOKEN, UNK_TOKEN, "a"]);
    }

    #[test]
    fn all_unique_corpus_has_no_unknowns() {
        let corpus = words("x y z w");
        let v = Vocab::build([corpus.clone()], 6).unwrap();
        assert!(corpus.iter().all(|t| v.encode(t) != Vocab::UNK));
    }

    #[test]
    fn errors() {
        assert!(matches!(Vocab::build([words("a")], 1), Err(CorpusError::VocabTooSmall(1))));
        assert!(matches!(Vocab::build(Vec::<Vec<String>>::new(), 5), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::build([words("the cat sat on the mat .")], 100).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.write(&path).unwrap();
        assert_eq!(Vocab::read(&path).unwrap(), v);
    }

    proptest! {
        #[test]
        fn decode_encode_identity(corpus in prop::collection::vec("[a-e]{1,3}", 1..40), probe in "[a-g]{1,3}") {
            let v = Vocab::build([corpus.clone()], 12).unwrap();
            for t in &corpus {
                if v.contains(t) {
                    prop_assert_eq!(v.decode(v.encode(t)), t.as_str());
                }
            }
            let expected = if v.contains(&probe) { probe.as_str() } else { UNK_TOKEN };
            prop_assert_eq!(v.decode(v.encode(&probe)), expected);
        }
    }
}
