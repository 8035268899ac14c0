use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SIL: usize = 0;
pub const SIL_TOKEN: &str = "<sil>";

const WORDS: [&str; 26] = [
    "alfa", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
];

/// Word list with the silence token at index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    /// `size` counts the silence token, so `size - 1` words are drawn from
    /// the phonetic alphabet.
    pub fn phonetic(size: usize) -> Result<Self> {
        if size < 2 || size > WORDS.len() + 1 {
            return Err(Error::Vocab(format!(
                "vocabulary size must be in 2..={}, got {size}",
                WORDS.len() + 1
            )));
        }
        let mut tokens = vec![SIL_TOKEN.to_string()];
        tokens.extend(WORDS[..size - 1].iter().map(|w| w.to_string()));
        Ok(Self { tokens })
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(SIL_TOKEN) {
            return Err(Error::Vocab(format!("token 0 must be {SIL_TOKEN}")));
        }
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid token {t:?}")));
            }
            if tokens[..i].contains(t) {
                return Err(Error::Vocab(format!("duplicate token {t:?}")));
            }
        }
        if tokens.len() < 2 {
            return Err(Error::Vocab("vocabulary needs at least one word".into()));
        }
        Ok(Self { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.tokens
            .iter()
            .position(|t| t == word)
            .filter(|&i| i != SIL)
    }

    pub fn ids(&self, words: &[String]) -> Result<Vec<usize>> {
        words
            .iter()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| Error::Vocab(format!("unknown word {w:?}")))
            })
            .collect()
    }

    pub fn words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Merges runs of identical labels and drops silence.
pub fn collapse(labels: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in labels {
        if prev != Some(l) && l != SIL {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phonetic_sizes() {
        let v = Vocab::phonetic(20).unwrap();
        assert_eq!(v.len(), 20);
        assert_eq!(v.word(0), Some(SIL_TOKEN));
        assert_eq!(v.word(1), Some("alfa"));
        assert_eq!(v.id("alfa"), Some(1));
        assert_eq!(v.id(SIL_TOKEN), None);
        assert!(Vocab::phonetic(1).is_err());
        assert!(Vocab::phonetic(28).is_err());
    }

    #[test]
    fn rejects_malformed_token_lists() {
        assert!(Vocab::from_tokens(vec!["a".into(), "b".into()]).is_err());
        assert!(Vocab::from_tokens(vec![SIL_TOKEN.into(), "a".into(), "a".into()]).is_err());
        assert!(Vocab::from_tokens(vec![SIL_TOKEN.into(), SIL_TOKEN.into()]).is_err());
        assert!(Vocab::from_tokens(vec![SIL_TOKEN.into()]).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let v = Vocab::phonetic(5).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["<sil>","alfa","bravo","charlie","delta"]"#);
        assert_eq!(serde_json::from_str::<Vocab>(&s).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>(r#"["x"]"#).is_err());
    }

    #[test]
    fn collapse_rules() {
        assert_eq!(collapse(&[0, 1, 1, 0, 2]), vec![1, 2]);
        assert_eq!(collapse(&[0, 0, 0]), Vec::<usize>::new());
        assert_eq!(collapse(&[1, 1, 0, 1]), vec![1, 1]);
        assert_eq!(collapse(&[]), Vec::<usize>::new());
    }
}
