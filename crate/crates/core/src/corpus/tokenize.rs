//! Tokenization and the topic-modeling preprocessor.

use serde::{Deserialize, Serialize};

use super::stoplist::Stoplist;

/// Lowercase content terms of one document.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenList {
    pub tokens: Vec<String>,
}

impl TokenList {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Split on every non-alphanumeric run. Does not lowercase.
pub fn alnum_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn is_numeric_token(token: &str) -> bool {
    token.chars().all(char::is_numeric)
}

/// Lowercase, split on non-alphanumeric boundaries, drop numerals, stopwords
/// and stoplisted phrases.
///
/// Phrase and word removal repeat until neither changes the stream, so the
/// result is a fixed point: `preprocess(out.joined()) == out`.
pub fn preprocess(text: &str, stoplist: &Stoplist) -> TokenList {
    let mut tokens = alnum_tokens(&text.to_lowercase());
    loop {
        let before = tokens.len();
        tokens = remove_phrases(tokens, stoplist.phrases());
        tokens.retain(|t| !is_numeric_token(t) && !stoplist.contains_word(t));
        if tokens.len() == before {
            break;
        }
    }
    TokenList { tokens }
}

fn remove_phrases(tokens: Vec<String>, phrases: &[Vec<String>]) -> Vec<String> {
    if phrases.is_empty() {
        return tokens;
    }
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for phrase in phrases {
            let end = i + phrase.len();
            if end <= tokens.len() && tokens[i..end] == phrase[..] {
                i = end;
                continue 'outer;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pp(text: &str) -> Vec<String> {
        preprocess(text, &Stoplist::standard()).tokens
    }

    #[test]
    fn custom_stoplist_and_punctuation() {
        assert_eq!(
            pp("Regarding the Office Action, the claim is obvious."),
            vec!["claim", "obvious"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(pp("").is_empty());
    }

    #[test]
    fn et_al_and_numerals() {
        assert_eq!(pp("Jin et al. teaches Figs. 1, 2"), vec!["jin", "teaches", "figs"]);
    }

    #[test]
    fn hyphenated_ranges_do_not_survive() {
        assert_eq!(pp("claims 1-5 rejected"), vec!["claims", "rejected"]);
    }

    #[test]
    fn phrase_exposed_by_word_removal_is_removed() {
        assert_eq!(pp("office the action memory"), vec!["memory"]);
    }

    proptest! {
        #[test]
        fn idempotent(words in proptest::collection::vec(
            prop_oneof![
                Just("office".to_string()), Just("action".to_string()), Just("the".to_string()),
                Just("et".to_string()), Just("al".to_string()), Just("42".to_string()),
                "[a-zA-Z]{1,6}", "[a-z0-9]{1,4}", "[.,;!-]{1,2}"
            ], 0..30))
        {
            let text = words.join(" ");
            let first = pp(&text);
            let second = pp(&first.join(" "));
            prop_assert_eq!(first, second);
        }
    }
}
