use crate::corrector::levenshtein;

pub const DEFAULT_RADIUS: usize = 3;

/// Single-linkage clustering under edit distance: two tokens share a group
/// when a chain of pairwise distances `<= radius` connects them. Groups are
/// ordered by their first member's position in `tokens`, members keep input
/// order.
pub fn cluster<S: AsRef<str>>(tokens: &[S], radius: usize) -> Vec<Vec<String>> {
    let n = tokens.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if levenshtein(tokens[i].as_ref(), tokens[j].as_ref()) <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => g.push(t.as_ref().to_owned()),
            None => groups.push((root, vec![t.as_ref().to_owned()])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}
