//! Mapping model-emitted strings back to character spans of the input.

use serde::{Deserialize, Serialize};

use crate::corpus::Span;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundingPolicy {
    /// Leftmost exact match.
    #[default]
    FirstOccurrence,
    /// Leftmost exact match, flagged as ambiguous when the string recurs.
    AllOccurrences,
    /// No spans; strings are only checked for presence.
    StringOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grounding {
    pub span: Option<Span>,
    /// The needle does not occur in the text.
    pub ungrounded: bool,
    pub ambiguous: bool,
}

fn char_index(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Locates `needle` in `text` by exact, case-sensitive search. Offsets are
/// character offsets, end exclusive.
pub fn ground_string(text: &str, needle: &str, policy: GroundingPolicy) -> Grounding {
    let first = if needle.is_empty() { None } else { text.find(needle) };
    let Some(byte) = first else {
        return Grounding {
            span: None,
            ungrounded: true,
            ambiguous: false,
        };
    };
    match policy {
        GroundingPolicy::StringOnly => Grounding {
            span: None,
            ungrounded: false,
            ambiguous: false,
        },
        GroundingPolicy::FirstOccurrence | GroundingPolicy::AllOccurrences => {
            let start = char_index(text, byte);
            let span = Span::new(start, start + needle.chars().count(), needle);
            let ambiguous = policy == GroundingPolicy::AllOccurrences && {
                let next = byte + text[byte..].chars().next().map_or(1, char::len_utf8);
                text[next..].contains(needle)
            };
            Grounding {
                span: Some(span),
                ungrounded: false,
                ambiguous,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leftmost_char_offsets() {
        let g = ground_string("the ship departed", "departed", GroundingPolicy::FirstOccurrence);
        assert_eq!(g.span, Some(Span::new(9, 17, "departed")));
        assert!(!g.ungrounded && !g.ambiguous);
        let g = ground_string("Señora del Mar left Luleå", "Luleå", GroundingPolicy::FirstOccurrence);
        assert_eq!(g.span, Some(Span::new(20, 25, "Luleå")));
    }

    #[test]
    fn absent_and_ambiguous() {
        let g = ground_string("abc", "xyz", GroundingPolicy::FirstOccurrence);
        assert!(g.ungrounded && g.span.is_none());
        let g = ground_string("a ship and a ship", "ship", GroundingPolicy::AllOccurrences);
        assert_eq!(g.span, Some(Span::new(2, 6, "ship")));
        assert!(g.ambiguous);
        let g = ground_string("a ship and a ship", "ship", GroundingPolicy::FirstOccurrence);
        assert!(!g.ambiguous);
        let g = ground_string("aaa", "aa", GroundingPolicy::AllOccurrences);
        assert!(g.ambiguous);
    }

    #[test]
    fn string_only_checks_presence() {
        let g = ground_string("the ship", "ship", GroundingPolicy::StringOnly);
        assert!(g.span.is_none() && !g.ungrounded);
        let g = ground_string("the ship", "boat", GroundingPolicy::StringOnly);
        assert!(g.ungrounded);
    }
}
