// Reads an SMT-LIB 2 script on stdin, evaluates it with the WASM build of Z3,
// and writes the solver output (sat/unsat/model/errors) to stdout.
//
// Accepts and ignores `-in` / `-smt2` for drop-in compatibility with the
// native z3 binary; `key=value` arguments are applied as Z3 global parameters.
'use strict';

const fs = require('fs');
const { init } = require('z3-solver');

(async () => {
  const { Z3 } = await init();
  for (const arg of process.argv.slice(2)) {
    const eq = arg.indexOf('=');
    if (eq > 0 && !arg.startsWith('-')) {
      Z3.global_param_set(arg.slice(0, eq), arg.slice(eq + 1));
    }
  }
  const script = fs.readFileSync(0, 'utf8');
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);
  try {
    const out = await Z3.eval_smtlib2_string(ctx, script);
    process.stdout.write(out.endsWith('\n') || out === '' ? out : out + '\n');
  } catch (err) {
    process.stderr.write(String(err && err.message ? err.message : err) + '\n');
    process.exit(1);
  }
  process.exit(0);
})();
