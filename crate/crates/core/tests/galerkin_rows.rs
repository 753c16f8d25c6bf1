mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semistatic::claims::{Claim, Liability};
use semistatic::galerkin::{assemble, Frictions, ProgramInputs, Variable};
use semistatic::instruments::{Market, OptionKind, Quote};
use semistatic::pricing::{AgentSpec, Pricer, PricingSetup};
use semistatic::scenario::{build_grid, market_node_sets, VgParams, DEFAULT_TRUNCATION};
use semistatic::synthetic;

fn knockout_loss(path: &[f64]) -> f64 {
    let payout = if path[0] < 2400.0 { (path[1] - 2350.0).max(0.0) } else { 0.0 };
    100.0 * payout
}

fn random_decision(rng: &mut ChaCha8Rng, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            let l = if l.is_finite() { l } else { -300.0 };
            let u = if u.is_finite() { u } else { l + 600.0 };
            rng.random_range(l..=u)
        })
        .collect()
}

#[test]
fn rows_match_direct_evaluation() {
    let claim = Liability::new(Claim::knockout_call(2350.0, 2400.0), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for frictions in [
        Frictions::Frictionless,
        Frictions::TransactionCost { delta_pct: 0.0 },
        Frictions::TransactionCost { delta_pct: 0.1 },
        Frictions::TransactionCost { delta_pct: 10.0 },
    ] {
        let setup = PricingSetup::new(synthetic::default_chain(), VgParams::default(), AgentSpec::default())
            .with_frictions(frictions);
        let pricer = Pricer::new(setup, std::slice::from_ref(&claim)).unwrap();
        let program = pricer.program(std::slice::from_ref(&claim), 100_000.0).unwrap();
        let a = program.loss_matrix();
        for _ in 0..5 {
            let x = random_decision(&mut rng, &program.lower, &program.upper);
            for i in 0..program.num_grid_points() {
                let path = program.grid_point(i);
                let direct = common::direct_loss(&program, &x, path, 2360.0, knockout_loss(path));
                let assembled = program.offsets[i] + (0..x.len()).map(|j| a[(i, j)] * x[j]).sum::<f64>();
                let scale = 1.0
                    + x.iter().map(|v| v.abs()).sum::<f64>() * path.iter().cloned().fold(0.0, f64::max);
                assert!((direct - assembled).abs() <= 1e-12 * scale, "{frictions:?} point {i}");
                let at = program.loss_at(&x, path).unwrap();
                assert!((at - assembled).abs() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn hand_assembled_two_point_instance() {
    // one call K=2300 at period 1, grid {2250, 2400}, no dynamic trading
    let quote = Quote::new("c", OptionKind::Call, 2300.0, 1, 50.0, 52.0, 1.0, 1.0).unwrap();
    let market = Market::new(vec![quote], 100.0).unwrap();
    let model = VgParams {
        horizons: vec![0.1],
        ..VgParams::default()
    };
    let grid = build_grid(&model, &[vec![2250.0, 2400.0]], &[vec![]], &[(2200.0, 2500.0)]).unwrap();
    let kappa = 2e-5;
    let program = assemble(&ProgramInputs {
        market: &market,
        liabilities: &[],
        grid: &grid,
        kappa,
        budget: 100_000.0,
        frictions: Frictions::Frictionless,
        dynamic_trading: false,
    })
    .unwrap();
    assert_eq!(
        program.variables,
        vec![Variable::OptionBuy { quote: 0 }, Variable::OptionSell { quote: 0 }, Variable::Cash]
    );
    assert_eq!(program.budget_row, vec![52.0, -50.0, 1.0]);
    assert_eq!((program.upper[0], program.upper[1]), (100.0, 100.0));
    let (buy, sell, cash) = (30.0, 10.0, 1000.0);
    let m: Vec<f64> = grid.masses.clone();
    // loss at 2250: -cash; at 2400: -cash - 100 (buy - sell)
    let expected = m[0] * (kappa * -cash).exp() + m[1] * (kappa * (-cash - 100.0 * (buy - sell))).exp();
    let (v, g) =
        semistatic::solver::objective_and_gradient(&program.to_convex_program(), &[buy, sell, cash]).unwrap();
    assert!((v / expected - 1.0).abs() < 1e-14);
    let e1 = m[1] * (kappa * (-cash - 100.0 * (buy - sell))).exp();
    assert!((g[0] - kappa * -100.0 * e1).abs() < 1e-18);
    assert!((g[1] - kappa * 100.0 * e1).abs() < 1e-18);
    assert!((g[2] + kappa * v).abs() < 1e-18);
}

#[test]
fn buying_one_unit_at_a_tenth_of_a_percent() {
    let market = Market::empty(100.0);
    let model = VgParams {
        horizons: vec![0.1],
        ..VgParams::default()
    };
    let grid = build_grid(&model, &[vec![2360.0]], &[vec![]], &[(2300.0, 2400.0)]).unwrap();
    let program = assemble(&ProgramInputs {
        market: &market,
        liabilities: &[],
        grid: &grid,
        kappa: 2e-5,
        budget: 0.0,
        frictions: Frictions::TransactionCost { delta_pct: 0.1 },
        dynamic_trading: true,
    })
    .unwrap();
    let buy = program
        .variables
        .iter()
        .position(|v| *v == Variable::IndexBuy { period: 0, cell: 0 })
        .unwrap();
    let mut x = vec![0.0; program.num_variables()];
    x[buy] = 1.0;
    // bought at 2360 with cost, liquidated at 2360 without
    let loss = program.loss_at(&x, &[2360.0]).unwrap();
    assert!((loss - (2362.36 - 2360.0)).abs() < 1e-9);
}

#[test]
fn paper_scale_program_counts() {
    let market = synthetic::paper_scale_chain();
    let model = VgParams::default();
    let strikes: Vec<Vec<f64>> = (1..=2).map(|t| market.strikes_at(t)).collect();
    // the box must hold every strike of the chain, which starts at 500
    let truncation = [(400.0, DEFAULT_TRUNCATION.1)];
    let nodes = market_node_sets(&model, &strikes, &[vec![], vec![]], &truncation).unwrap();
    let grid = build_grid(&model, &nodes, &[vec![], vec![]], &truncation).unwrap();
    assert!(grid.len() > 160_000, "{}", grid.len());
    let program = assemble(&ProgramInputs {
        market: &market,
        liabilities: &[],
        grid: &grid,
        kappa: 2e-5,
        budget: 100_000.0,
        frictions: Frictions::Frictionless,
        dynamic_trading: true,
    })
    .unwrap();
    assert!(program.num_variables() > 1700, "{}", program.num_variables());
    assert!(program.num_constraints() > 2700, "{}", program.num_constraints());
}

#[test]
fn no_simultaneous_buy_and_sell_at_the_optimum() {
    let setup = PricingSetup::new(synthetic::default_chain(), VgParams::default(), AgentSpec::default());
    let pricer = Pricer::new(setup, &[]).unwrap();
    let o = pricer.optimum(&[], 100_000.0).unwrap();
    let x = &o.solution.x;
    for (j, v) in o.program.variables.iter().enumerate() {
        if let Variable::OptionBuy { quote } = *v {
            let sell = o
                .program
                .variables
                .iter()
                .position(|w| *w == Variable::OptionSell { quote })
                .unwrap();
            assert!(x[j] * x[sell] <= 1e-7 * (1.0 + x[j].max(x[sell])), "quote {quote}");
        }
    }
}

#[test]
fn prohibitive_costs_stop_index_trading() {
    let setup = PricingSetup::new(synthetic::default_chain(), VgParams::default(), AgentSpec::default())
        .with_frictions(Frictions::TransactionCost { delta_pct: 10.0 });
    let pricer = Pricer::new(setup, &[]).unwrap();
    let o = pricer.optimum(&[], 100_000.0).unwrap();
    let grid = pricer.grid();
    // cells the model never visits leave their trades undetermined, so the
    // trades are weighted by the probability of their cell
    let mut expected = 0.0;
    for (j, v) in o.program.variables.iter().enumerate() {
        let (Variable::IndexBuy { period, cell } | Variable::IndexSell { period, cell }) = *v else {
            continue;
        };
        let prob: f64 = if period == 0 {
            1.0
        } else {
            (0..grid.len())
                .filter(|&i| o.program.basis.cell(period, grid.point(i)[period - 1]) == cell)
                .map(|i| grid.masses[i])
                .sum()
        };
        expected += prob * o.solution.x[j].abs();
    }
    assert!(expected < 1e-6, "{expected}");
}
