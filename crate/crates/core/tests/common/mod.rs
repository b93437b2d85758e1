#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

/// A small dataset in the ml-100k layout: 30 users spread over every age
/// bucket, 25 items with one or two genres (item 25 has none), 12 ratings
/// per user.
pub fn write_ml100k(dir: &Path) {
    let mut data = String::new();
    for u in 1..=30u32 {
        for j in 0..12u32 {
            let i = if j == 11 && u % 3 == 0 { 25 } else { (u * 5 + j * 2) % 24 + 1 };
            let r = (u * 3 + i * 7) % 5 + 1;
            writeln!(data, "{u}\t{i}\t{r}\t{}", 880_000_000 + u * 1000 + j).unwrap();
        }
    }
    let mut items = String::new();
    for i in 1..=25u32 {
        let flags: Vec<&str> = (0..19u32)
            .map(|g| if i < 25 && (g == i % 18 + 1 || g == (i * 7) % 19) { "1" } else { "0" })
            .collect();
        writeln!(items, "{i}|Movie {i} (199{})|01-Jan-1995||http://x|{}", i % 10, flags.join("|")).unwrap();
    }
    let ages = [7, 16, 19, 23, 27, 33, 38, 44, 46, 49, 52, 55, 58, 66];
    let mut users = String::new();
    for u in 1..=30u32 {
        let age = ages[u as usize % ages.len()];
        writeln!(users, "{u}|{age}|{}|other|0000{}", if u % 3 == 0 { "F" } else { "M" }, u % 10).unwrap();
    }
    std::fs::write(dir.join("u.data"), data).unwrap();
    std::fs::write(dir.join("u.item"), items).unwrap();
    std::fs::write(dir.join("u.user"), users).unwrap();
}
