const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

/// Whitespace tokenization with leading and trailing punctuation split into
/// separate tokens. Case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut leading = Vec::new();
        while let Some(c) = rest.chars().next().filter(|c| PUNCTUATION.contains(c)) {
            leading.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().next_back().filter(|c| PUNCTUATION.contains(c)) {
            trailing.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        }
        out.extend(leading);
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(tokenize("Mary bought the cheese."), ["Mary", "bought", "the", "cheese", "."]);
        assert_eq!(tokenize("These snacks, Mary bought."), ["These", "snacks", ",", "Mary", "bought", "."]);
        assert_eq!(tokenize("(\"Hi!\")"), ["(", "\"", "Hi", "!", "\"", ")"]);
        assert_eq!(tokenize("don't"), ["don't"]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n").is_empty());
    }

    #[test]
    fn case_is_preserved() {
        assert_eq!(tokenize("It IS"), ["It", "IS"]);
    }
}
