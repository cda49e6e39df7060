//! Description assembly and cleaning.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub const DESCRIPTION_SEPARATOR: &str = ". ";

/// Join the non-empty values of `signature_columns`, in column order.
/// Headings are not part of the text.
pub fn build_description(attributes: &[(String, String)], signature_columns: &[String]) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for column in signature_columns {
        let value = attributes
            .iter()
            .find(|(heading, _)| heading == column)
            .map(|(_, v)| v.trim());
        if let Some(v) = value.filter(|v| !v.is_empty()) {
            parts.push(v);
        }
    }
    parts.join(DESCRIPTION_SEPARATOR)
}

/// Normalize a description to single-spaced ASCII.
///
/// Latin letters lose their diacritics; every other non-ASCII character is
/// dropped, except Unicode whitespace which becomes a space. ASCII control
/// characters other than whitespace are dropped too.
pub fn clean_description(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        let folded = if ch.is_whitespace() {
            Some(' ')
        } else if ch.is_ascii() {
            (!ch.is_ascii_control()).then_some(ch)
        } else {
            fold_to_ascii(ch)
        };
        match folded {
            Some(' ') => pending_space = true,
            Some(c) => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
            }
            None => {}
        }
    }
    out
}

/// Single-character ASCII fold for accented Latin letters.
fn fold_to_ascii(ch: char) -> Option<char> {
    match ch {
        'ø' => return Some('o'),
        'Ø' => return Some('O'),
        'ł' => return Some('l'),
        'Ł' => return Some('L'),
        'đ' => return Some('d'),
        'Đ' => return Some('D'),
        'ı' => return Some('i'),
        _ => {}
    }
    let mut base = std::iter::once(ch).nfd().filter(|c| !is_combining_mark(*c));
    match (base.next(), base.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(h, d)| (h.to_string(), d.to_string()))
            .collect()
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn joins_values_only() {
        let a = attrs(&[("UNIT_NAME", "Granite"), ("MAJOR1", "granite")]);
        assert_eq!(
            build_description(&a, &cols(&["UNIT_NAME", "MAJOR1"])),
            "Granite. granite"
        );
    }

    #[test]
    fn all_empty_yields_empty() {
        let a = attrs(&[("UNIT_NAME", ""), ("MAJOR1", "  ")]);
        assert_eq!(build_description(&a, &cols(&["UNIT_NAME", "MAJOR1"])), "");
    }

    #[test]
    fn column_order_not_attribute_order() {
        let a = attrs(&[
            ("UNITDESC", "Gray limestone"),
            ("MAJOR1", "limestone"),
            ("MINOR1", ""),
            ("UNIT_NAME", "Pogonip Group"),
            ("OTHER", "ignored"),
        ]);
        let signature = cols(&[
            "UNIT_NAME", "MAJOR1", "MAJOR2", "MAJOR3", "MINOR1", "MINOR2", "MINOR3", "MINOR4",
            "MINOR5", "GENERALIZE", "UNITDESC",
        ]);
        assert_eq!(
            build_description(&a, &signature),
            "Pogonip Group. limestone. Gray limestone"
        );
    }

    #[test]
    fn whitespace_collapses() {
        assert_eq!(clean_description("a  b\n c"), "a b c");
        assert_eq!(clean_description("\t lead and trail \r\n"), "lead and trail");
        assert_eq!(clean_description(""), "");
    }

    #[test]
    fn folds_and_strips_non_ascii() {
        assert_eq!(clean_description("café±skarn"), "cafeskarn");
        assert_eq!(clean_description("Ångström gneiss"), "Angstrom gneiss");
        assert_eq!(clean_description("ølivine — basalt"), "olivine basalt");
        assert_eq!(clean_description("non\u{a0}breaking"), "non breaking");
        assert_eq!(clean_description("quartz≥50%"), "quartz50%");
    }

    #[test]
    fn idempotent_on_samples() {
        for s in ["café±skarn", "  a\t\tb  ", "Ü\u{301}ber", "x\u{0}y"] {
            let once = clean_description(s);
            assert_eq!(clean_description(&once), once);
            assert!(once.len() <= s.len());
        }
    }
}
