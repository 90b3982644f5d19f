use std::fmt;
use std::str::FromStr;

use unicode_normalization::UnicodeNormalization;

use crate::error::Error;

/// Text normalization applied before training and segmentation.
///
/// The rule id is stored in the model header so a model always segments
/// with the rule it was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Unicode NFKC, then every whitespace run becomes one ASCII space and
    /// leading/trailing whitespace is dropped.
    #[default]
    NfkcCollapseWhitespace,
    /// Text is used verbatim.
    Identity,
}

impl Normalization {
    pub fn id(self) -> &'static str {
        match self {
            Normalization::NfkcCollapseWhitespace => "nfkc_ws",
            Normalization::Identity => "identity",
        }
    }

    pub fn apply(self, text: &str) -> String {
        match self {
            Normalization::Identity => text.to_string(),
            Normalization::NfkcCollapseWhitespace => {
                let nfkc: String = text.nfkc().collect();
                collapse_whitespace(&nfkc)
            }
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nfkc_ws" => Ok(Normalization::NfkcCollapseWhitespace),
            "identity" => Ok(Normalization::Identity),
            other => Err(Error::Input(format!("unknown normalization rule `{other}`"))),
        }
    }
}

/// Collapses whitespace runs to a single space and trims both ends.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
