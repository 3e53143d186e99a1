//! Canonical answer normalization used for voting and evaluation.

/// Normalizes a raw answer string to its canonical comparison form.
///
/// Steps, in order: trim outer whitespace, repeatedly peel wrapping quote
/// characters and sentence-terminal periods (stopping rather than producing
/// an empty string), lowercase, collapse internal whitespace runs to single
/// spaces, and canonicalize plain decimal numbers (drop a leading "+" and
/// leading zeros, strip trailing fractional zeros, render negative zero as
/// "0"). The result is empty only for empty or all-whitespace input, and
/// the function is idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let mut cur = raw.trim().to_string();
    loop {
        let stripped = cur
            .trim()
            .trim_matches(|c| c == '"' || c == '\'')
            .trim_end_matches('.')
            .trim();
        if stripped.is_empty() || stripped == cur {
            break;
        }
        cur = stripped.to_string();
    }
    let lowered = cur.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    match canonicalize_decimal(&collapsed) {
        Some(num) => num,
        None => collapsed,
    }
}

/// Re-renders a plain decimal literal in canonical form, or returns None
/// when the input is not a decimal literal. Works on the digit string
/// directly so arbitrarily large values stay exact.
fn canonicalize_decimal(s: &str) -> Option<String> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if body.contains('.') && frac_part.is_empty() {
        return None;
    }
    let int_trimmed = int_part.trim_start_matches('0');
    let int_canon = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_canon = frac_part.trim_end_matches('0');
    let is_zero = int_canon == "0" && frac_canon.is_empty();
    let mut out = String::new();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(int_canon);
    if !frac_canon.is_empty() {
        out.push('.');
        out.push_str(frac_canon);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trims_and_canonicalizes_numbers() {
        assert_eq!(normalize_answer("  4.0 "), "4");
    }

    #[test]
    fn plain_text_passes_through() {
        assert_eq!(normalize_answer("x"), "x");
    }

    #[test]
    fn strips_case_and_terminal_period() {
        assert_eq!(normalize_answer("The Answer."), "the answer");
    }

    #[test]
    fn numeric_forms() {
        assert_eq!(normalize_answer("007"), "7");
        assert_eq!(normalize_answer("+12"), "12");
        assert_eq!(normalize_answer("-03.10"), "-3.1");
        assert_eq!(normalize_answer("0.50"), "0.5");
        assert_eq!(normalize_answer(".5"), "0.5");
        assert_eq!(normalize_answer("-0.0"), "0");
        assert_eq!(normalize_answer("4."), "4");
        assert_eq!(normalize_answer("123456789012345678901234567890"), "123456789012345678901234567890");
    }

    #[test]
    fn non_numeric_lookalikes_stay_text() {
        assert_eq!(normalize_answer("1e3"), "1e3");
        assert_eq!(normalize_answer("1.2.3"), "1.2.3");
        assert_eq!(normalize_answer("-"), "-");
        assert_eq!(normalize_answer("4 . 0"), "4 . 0");
    }

    #[test]
    fn quotes_and_wrapping_are_peeled() {
        assert_eq!(normalize_answer("\"42\""), "42");
        assert_eq!(normalize_answer("'The Answer.'"), "the answer");
        assert_eq!(normalize_answer("\"'7'\""), "7");
    }

    #[test]
    fn internal_whitespace_collapses() {
        assert_eq!(normalize_answer("the \t\n answer"), "the answer");
    }

    #[test]
    fn empty_only_from_whitespace() {
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("   \t\n"), "");
        assert!(!normalize_answer(".").is_empty());
        assert!(!normalize_answer("\"\"").is_empty());
        assert!(!normalize_answer("'").is_empty());
        assert!(!normalize_answer("...").is_empty());
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC*") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once.clone());
        }

        #[test]
        fn empty_result_implies_whitespace_input(s in "\\PC*") {
            if !s.trim().is_empty() {
                prop_assert!(!normalize_answer(&s).is_empty());
            }
        }

        #[test]
        fn integers_render_canonically(n in -1_000_000i64..1_000_000, zeros in 0usize..3) {
            let padded = if n < 0 {
                format!("-{}{}", "0".repeat(zeros), -n)
            } else {
                format!("{}{}", "0".repeat(zeros), n)
            };
            prop_assert_eq!(normalize_answer(&padded), n.to_string());
        }
    }
}
