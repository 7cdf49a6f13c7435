//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sheetql::table::{ColType, ColumnDef, Scalar, Table};

pub const CLUBS: usize = 72;
pub const PURCHASES: usize = 1297;
pub const CV_BUYERS: usize = 7;

/// 22 product codes.
pub const PRODUCTS: [&str; 22] = [
    "PURCH", "BIM", "DOFIN", "GPI", "JADE", "MEM", "MZK-AX", "REP", "SER", "VIDEO", "AG", "CONS",
    "GEO", "H", "CV", "HR", "PAY", "PORTAL", "WEB", "LIC", "TRN", "SUP",
];

const PRICE_POINTS: [f64; 6] = [500.0, 2000.0, 6605.1, 15000.0, 25143.16, 125000.0];

/// 1297 club/product purchases over 72 clubs and 22 products, rows ordered by
/// club then product. CV is bought by exactly seven clubs.
pub fn purchases() -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(1297);
    let clubs: Vec<u32> = (0..CLUBS as u32).map(|i| 682 + i).collect();
    let pops: Vec<f64> = clubs
        .iter()
        .map(|_| rng.gen_range(3..=10000) as f64)
        .collect();

    let cv = PRODUCTS.iter().position(|&p| p == "CV").unwrap();
    let mut cv_clubs: Vec<usize> = (0..CLUBS).collect();
    cv_clubs.shuffle(&mut rng);
    cv_clubs.truncate(CV_BUYERS);

    let mut others: Vec<(usize, usize)> = (0..CLUBS)
        .flat_map(|c| {
            (0..PRODUCTS.len())
                .filter(move |&p| p != cv)
                .map(move |p| (c, p))
        })
        .collect();
    others.shuffle(&mut rng);
    others.truncate(PURCHASES - CV_BUYERS);
    let mut pairs: Vec<(usize, usize)> = others
        .into_iter()
        .chain(cv_clubs.into_iter().map(|c| (c, cv)))
        .collect();
    pairs.sort();

    let columns = vec![
        ColumnDef::new("Club", ColType::Number),
        ColumnDef::new("Product", ColType::Text),
        ColumnDef::new("Previous_Cost", ColType::Number),
        ColumnDef::new("Pop", ColType::Number),
        ColumnDef::new("Cost", ColType::Number),
    ];
    let rows = pairs
        .into_iter()
        .map(|(c, p)| {
            let cost = PRICE_POINTS[rng.gen_range(0..PRICE_POINTS.len())];
            let previous = (cost * rng.gen_range(80..=100) as f64).round() / 100.0;
            vec![
                Scalar::Number(clubs[c] as f64),
                Scalar::Text(PRODUCTS[p].to_string()),
                Scalar::Number(previous),
                Scalar::Number(pops[c]),
                Scalar::Number(cost),
            ]
        })
        .collect();
    Table::new("purchases", columns, rows).unwrap()
}
