//! Name distances used for auto-correction and "did you mean" suggestions.

/// Damerau-Levenshtein distance (optimal string alignment variant) over chars.
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}

/// The single candidate at distance exactly 1, if there is exactly one.
pub fn unique_at_distance_one<'a, I>(name: &str, candidates: I) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut found = None;
    for c in candidates {
        if damerau_levenshtein(name, c) == 1 {
            if found.is_some() {
                return None;
            }
            found = Some(c);
        }
    }
    found
}

/// The single candidate equal to `name` ignoring ASCII case, if unique.
pub fn unique_case_insensitive<'a, I>(name: &str, candidates: I) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut found = None;
    for c in candidates {
        if c.eq_ignore_ascii_case(name) {
            if found.is_some() {
                return None;
            }
            found = Some(c);
        }
    }
    found
}

/// Up to `limit` candidates ordered by (case-insensitive distance, name).
pub fn nearest<'a, I>(name: &str, candidates: I, limit: usize) -> Vec<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let lower = name.to_ascii_lowercase();
    let mut scored: Vec<(usize, &str)> = candidates
        .into_iter()
        .map(|c| (damerau_levenshtein(&lower, &c.to_ascii_lowercase()), c))
        .collect();
    scored.sort();
    scored.into_iter().take(limit).map(|(_, c)| c).collect()
}

/// A suggestion close enough to be worth showing: unique best match within
/// distance 2, or a third of the name length for long names.
pub fn suggestion<'a, I>(name: &str, candidates: I) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let lower = name.to_ascii_lowercase();
    let bound = 2.max(name.chars().count() / 3);
    let mut scored: Vec<(usize, &str)> = candidates
        .into_iter()
        .map(|c| (damerau_levenshtein(&lower, &c.to_ascii_lowercase()), c))
        .filter(|(d, _)| *d <= bound)
        .collect();
    scored.sort();
    match scored.as_slice() {
        [] => None,
        [(_, c)] => Some(c),
        [(d0, c), (d1, _), ..] if d0 < d1 => Some(c),
        _ => None,
    }
}
