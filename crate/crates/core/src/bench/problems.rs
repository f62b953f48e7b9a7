use super::{BenchError, Expected, ExpectedFlash, ExpectedIterations, ExpectedStability, IterationPair, ProblemDef};
use crate::eos::ComponentDatabase;
use crate::flash::FlashSpec;

pub const BUILTIN_IDS: [&str; 7] = ["P1", "P2", "P3", "P4", "P5", "P6", "CO2"];

const SOURCES: [&str; 2] = ["reference results", "literature results"];
const BINARY: [&str; 2] = ["C1", "H2S"];
const SIX: [&str; 6] = ["C2", "C3H6", "C3", "iC4", "nC4", "nC5"];
const SIX_MOLES: [f64; 6] = [10.8, 360.8, 146.5, 233.0, 233.0, 15.9];
const CM3: f64 = 1e-6;

fn pair(ls: Option<usize>, tr: Option<usize>) -> IterationPair {
    IterationPair { line_search: ls, trust_region: tr }
}

type Stab = (f64, &'static [f64], f64);
type Split = (f64, f64, &'static [f64], f64, f64);
type Iter = (Option<usize>, Option<usize>);

struct Row {
    id: &'static str,
    names: &'static [&'static str],
    u: f64,
    v: f64,
    moles: &'static [f64],
    /// temperature, trial concentrations, D; one entry per source
    stability: [Stab; 2],
    /// energy, volume, moles of one phase, S_I, S_II; one entry per source
    flash: [Split; 2],
    /// scl, acl, uvn outer, uvn inner; (line search, trust region)
    iterations: [Iter; 4],
    marginal: bool,
}

const ROWS: [Row; 7] = [
    Row {
        id: "P1",
        names: &BINARY,
        u: -756500.8,
        v: 52869.0 * CM3,
        moles: &[10.0, 90.0],
        stability: [(151.83, &[104.12, 564.35], 875.45), (151.83, &[104.13, 564.39], 875.34)],
        flash: [
            (-211544.596326, 51366.638597 * CM3, &[9.664319, 54.315976], -4847.824867, -4335.499558),
            (-211544.585681, 51366.638771 * CM3, &[9.664320, 54.315978], -4847.824318, -4335.499136),
        ],
        iterations: [(Some(9), Some(9)), (Some(10), Some(10)), (Some(9), Some(9)), (Some(65), Some(64))],
        marginal: false,
    },
    Row {
        id: "P2",
        names: &BINARY,
        u: -1511407.6,
        v: 4268.1 * CM3,
        moles: &[0.95, 99.05],
        stability: [(291.91, &[146.18, 736.58], 26722.0), (291.91, &[146.11, 736.15], 26771.1)],
        flash: [
            (-1510985.755666, 4165.674425 * CM3, &[0.930730, 98.941685], -7391.709647, -7390.326837),
            (-1510985.753624, 4165.673900 * CM3, &[0.930730, 98.941685], -7391.709463, -7390.326639),
        ],
        iterations: [(Some(4), Some(4)), (Some(4), Some(4)), (Some(4), Some(4)), (Some(20), Some(20))],
        marginal: false,
    },
    Row {
        id: "P3",
        names: &BINARY,
        u: -331083.7,
        v: 80258.1 * CM3,
        moles: &[15.1, 84.9],
        stability: [(297.84, &[188.14, 1057.84], 2.08e-12), (297.84, &[188.14, 1057.84], 0.0)],
        flash: [
            (-330516.953672, 80256.537579 * CM3, &[15.099651, 84.862889], -2613.988418, -2613.988023),
            (-330516.922985, 80256.537494 * CM3, &[15.099651, 84.862887], -2613.988230, -2613.987835),
        ],
        iterations: [(Some(4), Some(4)), (Some(4), Some(4)), (Some(4), Some(5)), (Some(30), Some(30))],
        marginal: true,
    },
    Row {
        id: "P4",
        names: &BINARY,
        u: -636468.0,
        v: 9926.71 * CM3,
        moles: &[10.0, 90.0],
        stability: [(361.80, &[1011.36, 10037.91], 0.467), (361.80, &[1011.37, 10056.7], 0.5063)],
        flash: [
            (-390689.64236, 6414.415486 * CM3, &[6.448928, 56.394270], -4579.403289, -4579.402679),
            (-390660.034825, 6414.083981 * CM3, &[6.448582, 56.390527], -4579.402758, -4579.402147),
        ],
        iterations: [(Some(7), Some(7)), (Some(8), Some(8)), (None, Some(15)), (None, Some(81))],
        marginal: false,
    },
    Row {
        id: "P5",
        names: &SIX,
        u: -16272506.4,
        v: 479845.0 * CM3,
        moles: &SIX_MOLES,
        stability: [
            (122.97, &[0.3294, 3.10, 0.9066, 0.3860, 0.2934, 0.0038], 35298.74),
            (122.97, &[0.3294, 3.10, 0.9066, 0.3860, 0.2934, 0.0038], 35298.75),
        ],
        flash: [
            (
                -380012.963119,
                401192.630291 * CM3,
                &[4.242459, 68.231202, 24.419097, 18.531724, 13.887650, 0.325674],
                -73640.643944,
                -54937.804163,
            ),
            (
                -379886.931385,
                401197.390420 * CM3,
                &[4.203436, 68.225832, 24.416960, 18.529159, 13.885437, 0.325600],
                -73647.697512,
                -54939.068244,
            ),
        ],
        iterations: [(Some(10), Some(10)), (Some(10), Some(10)), (Some(10), Some(10)), (Some(71), Some(68))],
        marginal: false,
    },
    Row {
        id: "P6",
        names: &SIX,
        u: 24858.2,
        v: 289380.3 * CM3,
        moles: &SIX_MOLES,
        stability: [
            (394.54, &[46.41, 1738.53, 718.79, 1261.59, 1304.69, 101.00], 16.10),
            (394.54, &[46.41, 1739.38, 719.16, 1262.45, 1305.65, 101.09], 16.3045),
        ],
        flash: [
            (
                174842.436972,
                273150.189814 * CM3,
                &[10.066498, 333.715455, 135.327702, 213.668936, 213.122442, 14.391459],
                -9052.541673,
                -9052.420341,
            ),
            (
                174870.975415,
                273147.423428 * CM3,
                &[10.064693, 333.710698, 135.325654, 213.665513, 213.118914, 14.391190],
                -9052.552759,
                -9052.431373,
            ),
        ],
        iterations: [(Some(4), Some(5)), (Some(5), Some(5)), (Some(5), Some(5)), (Some(60), Some(60))],
        marginal: false,
    },
    Row {
        id: "CO2",
        names: &["CO2"],
        u: -87211375.744478,
        v: 1.0,
        moles: &[10000.0],
        stability: [(280.0, &[19487.12], 4608.27), (280.0, &[19469.17], 4608.22)],
        flash: [
            (-16873791.656255, 481283.486064 * CM3, &[2818.038719], -584388.23982, -583476.346351),
            (-16873789.390417, 481283.619636 * CM3, &[2818.038884], -584388.217059, -583476.321606),
        ],
        iterations: [(Some(32), Some(117)), (Some(33), Some(117)), (Some(77), Some(175)), (Some(964), Some(987))],
        marginal: false,
    },
];

/// P1-P6 and pure CO2 with the built-in component data.
pub fn builtin_problems() -> Result<Vec<ProblemDef>, BenchError> {
    builtin_problems_with(&ComponentDatabase::builtin())
}

pub fn builtin_problems_with(db: &ComponentDatabase) -> Result<Vec<ProblemDef>, BenchError> {
    ROWS.iter()
        .map(|r| {
            let mixture = db.mixture(r.names)?;
            let [scl, acl, outer, inner] = r.iterations;
            let stability = r
                .stability
                .iter()
                .zip(SOURCES)
                .map(|(&(t, conc, d), src)| ExpectedStability {
                    source: src.to_string(),
                    temperature: t,
                    conc: conc.to_vec(),
                    tpd: d,
                })
                .collect();
            let flash = r
                .flash
                .iter()
                .zip(SOURCES)
                .map(|(&(u, v, n, s1, s2), src)| ExpectedFlash {
                    source: src.to_string(),
                    energy: u,
                    volume: v,
                    moles: n.to_vec(),
                    s_single: s1,
                    s_two: s2,
                })
                .collect();
            Ok(ProblemDef {
                id: r.id.to_string(),
                components: r.names.iter().map(|s| s.to_string()).collect(),
                mixture,
                spec: FlashSpec::new(r.u, r.v, r.moles.to_vec()),
                expected: Some(Expected {
                    stability,
                    flash,
                    iterations: Some(ExpectedIterations {
                        source: SOURCES[0].to_string(),
                        rel_tol: 1e-6,
                        scl: pair(scl.0, scl.1),
                        acl: pair(acl.0, acl.1),
                        uvn_outer: pair(outer.0, outer.1),
                        uvn_inner: pair(inner.0, inner.1),
                    }),
                }),
                marginal: r.marginal,
            })
        })
        .collect()
}
