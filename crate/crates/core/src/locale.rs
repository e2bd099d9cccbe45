//! Output-language configuration.

use serde::{Deserialize, Serialize};

pub const DEFAULT_NAME_PREFIX: &str = "Myself, ";

/// Language settings applied to generated content.
///
/// `language` is substituted into the prompt templates wherever the output
/// language is named; `name_prefix` is the mandatory prefix of every
/// I-position name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Locale {
    pub tag: String,
    pub language: String,
    pub name_prefix: String,
}

impl Locale {
    /// Builds a locale from a language tag such as `en`, `ko` or `en-US`.
    /// Unknown tags keep the tag itself as the language name.
    pub fn from_tag(tag: &str) -> Self {
        let primary = tag.split(['-', '_']).next().unwrap_or(tag).to_ascii_lowercase();
        let language = match primary.as_str() {
            "en" => "English",
            "ko" => "Korean",
            "ja" => "Japanese",
            "zh" => "Chinese",
            "de" => "German",
            "fr" => "French",
            "es" => "Spanish",
            _ => tag,
        };
        Self {
            tag: tag.to_string(),
            language: language.to_string(),
            name_prefix: DEFAULT_NAME_PREFIX.to_string(),
        }
    }

    pub fn with_name_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.name_prefix = prefix.into();
        self
    }
}

impl Default for Locale {
    fn default() -> Self {
        Self::from_tag("en")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_tags_resolve() {
        assert_eq!(Locale::from_tag("ko").language, "Korean");
        assert_eq!(Locale::from_tag("en-US").language, "English");
        assert_eq!(Locale::from_tag("xx").language, "xx");
        assert_eq!(Locale::default().name_prefix, "Myself, ");
    }
}
