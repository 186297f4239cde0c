/** usage: node dist/cli.js render --spec figure.json [--spec more.json ...] */

import { loadSpec, render } from "./figure.js";

export function main(argv: string[]): number {
  if (argv[0] !== "render") {
    console.error("usage: render --spec <figure.json> [--spec <more.json> ...]");
    return 2;
  }
  const specs: string[] = [];
  for (let i = 1; i < argv.length; i++) {
    if (argv[i] === "--spec" && i + 1 < argv.length) {
      specs.push(argv[++i]);
    } else {
      console.error(`unrecognized argument: ${argv[i]}`);
      return 2;
    }
  }
  if (specs.length === 0) {
    console.error("at least one --spec is required");
    return 2;
  }
  for (const path of specs) {
    const out = render(loadSpec(path));
    console.log(`wrote ${out}`);
  }
  return 0;
}

process.exitCode = main(process.argv.slice(2));
