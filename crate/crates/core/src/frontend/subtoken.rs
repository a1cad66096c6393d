/// Splits an identifier on underscores and camelCase boundaries and
/// lowercases the pieces. An uppercase run followed by a lowercase letter
/// ends one letter early, so `getHTTPCode` yields `get`, `http`, `code`.
pub fn subtoken_split(identifier: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in identifier.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                if (!prev.is_uppercase() || next_lower) && !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
            }
            current.extend(c.to_lowercase());
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    if out.is_empty() && !identifier.is_empty() {
        out.push(identifier.to_lowercase());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_snake_and_camel() {
        assert_eq!(subtoken_split("pdc_tod_set"), ["pdc", "tod", "set"]);
        assert_eq!(subtoken_split("x"), ["x"]);
        assert_eq!(subtoken_split("getHTTPCode"), ["get", "http", "code"]);
        assert_eq!(subtoken_split("PDC_TOD_WRITE"), ["pdc", "tod", "write"]);
        assert_eq!(subtoken_split("__init"), ["init"]);
        assert_eq!(subtoken_split("utf8Decode"), ["utf8", "decode"]);
        assert_eq!(subtoken_split("_"), ["_"]);
    }
}
