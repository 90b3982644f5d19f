use std::sync::LazyLock;

use regex::Regex;

/// Share of whitespace-delimited tokens containing a URL or path above
/// which a document is dropped instead of stripped.
pub const MAX_DIRTY_FRACTION: f64 = 0.5;

static URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\b[A-Za-z][A-Za-z0-9+.\-]*://|\bwww\.)\S+").expect("valid url regex")
});

// At least two separator-joined segments, the last ending in `.ext`.
static PATH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\b[A-Za-z]:)?[/\\]?(?:[\w.\-]+[/\\])+[\w.\-]*\.[A-Za-z]\w{0,7}\b")
        .expect("valid path regex")
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cleaned {
    Kept(String),
    Rejected { dirty_tokens: usize, total_tokens: usize },
}

impl Cleaned {
    pub fn kept(self) -> Option<String> {
        match self {
            Cleaned::Kept(s) => Some(s),
            Cleaned::Rejected { .. } => None,
        }
    }
}

pub fn clean_text(text: &str) -> Cleaned {
    let mut kept = Vec::new();
    let mut total_tokens = 0;
    let mut dirty_tokens = 0;
    for token in text.split_whitespace() {
        total_tokens += 1;
        let no_urls = URL.replace_all(token, " ");
        let stripped = PATH.replace_all(&no_urls, " ");
        if stripped != token {
            dirty_tokens += 1;
        }
        kept.extend(stripped.split_whitespace().map(str::to_string));
    }
    if dirty_tokens as f64 > MAX_DIRTY_FRACTION * total_tokens as f64 {
        return Cleaned::Rejected {
            dirty_tokens,
            total_tokens,
        };
    }
    Cleaned::Kept(kept.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_stripped() {
        assert_eq!(clean_text("See https://x.example/a b"), Cleaned::Kept("See b".into()));
        assert_eq!(clean_text("go to www.example.org now"), Cleaned::Kept("go to now".into()));
    }

    #[test]
    fn url_heavy_text_rejected() {
        let text = format!("{} word", vec!["http://a.example/page"; 10].join(" "));
        assert!(matches!(clean_text(&text), Cleaned::Rejected { .. }));
    }

    #[test]
    fn paths_stripped() {
        assert_eq!(
            clean_text("open /usr/share/doc/readme.txt or C:\\tmp\\x.log please"),
            Cleaned::Kept("open or please".into())
        );
        // single segment or no extension: not a path
        assert_eq!(clean_text("file.txt and a/b"), Cleaned::Kept("file.txt and a/b".into()));
        assert_eq!(clean_text("ratio 3/4.5 here"), Cleaned::Kept("ratio 3/4.5 here".into()));
    }

    #[test]
    fn prose_unchanged() {
        let s = "The river flows east through the valley.";
        assert_eq!(clean_text(s), Cleaned::Kept(s.into()));
        assert_eq!(clean_text(""), Cleaned::Kept(String::new()));
    }

    #[test]
    fn exactly_half_is_kept() {
        assert_eq!(clean_text("abcd www.x"), Cleaned::Kept("abcd".into()));
        assert!(matches!(clean_text("www.a www.b c"), Cleaned::Rejected { .. }));
    }

    #[test]
    fn punctuation_around_url_survives() {
        assert_eq!(clean_text("(see https://a.example/x) ok"), Cleaned::Kept("(see ok".into()));
    }

    #[test]
    fn whitespace_collapsed() {
        assert_eq!(clean_text("  a \n\n b\t"), Cleaned::Kept("a b".into()));
    }
}
