/** CLI: export-field, export-text, make-demo. */

import * as fs from "fs";
import * as path from "path";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadCapture } from "./capture";
import { ModelLoadFailure, createProvider } from "./embedder";
import { encodePng } from "./features";
import { Intrinsics, Mat4 } from "./geometry";
import { exportField, exportTextSidecar } from "./exportField";
import { writeLfld } from "./lfld";
import { writePly } from "./ply";
import { annotations, renderView, sampleSceneCloud } from "./render";

function cmdExportField(args: { capture: string; out: string; report?: string;
                               model: string }): void {
  const provider = createProvider(args.model);
  const capture = loadCapture(args.capture);
  const { content, report } = exportField(capture, provider);
  fs.writeFileSync(args.out, writeLfld(content));
  const reportPath = args.report ?? args.out.replace(/\.lfld$/, "") + ".report.json";
  fs.writeFileSync(reportPath, JSON.stringify(report, null, 2));
  console.log(JSON.stringify({ field: args.out, report: reportPath, ...report }));
}

function cmdExportText(args: { phrases: string[]; out: string; model: string }): void {
  const provider = createProvider(args.model);
  const sidecar = exportTextSidecar(args.phrases, provider);
  fs.writeFileSync(args.out, JSON.stringify(sidecar));
  console.log(JSON.stringify({ sidecar: args.out, phrases: Object.keys(sidecar) }));
}

function cmdMakeDemo(args: { dir: string; trajectory: string }): void {
  const dir = args.dir;
  fs.mkdirSync(path.join(dir, "images"), { recursive: true });
  const poses = JSON.parse(fs.readFileSync(args.trajectory, "utf-8")) as Mat4[];
  const intr: Intrinsics = { fx: 130, fy: 130, cx: 80, cy: 60, width: 160, height: 120 };
  const images: string[] = [];
  poses.forEach((pose, i) => {
    const name = `images/img${String(i).padStart(2, "0")}.png`;
    fs.writeFileSync(path.join(dir, name), encodePng(renderView(pose, intr)));
    images.push(name);
  });
  fs.writeFileSync(path.join(dir, "cloud.ply"),
                   writePly({ points: sampleSceneCloud() }));
  fs.copyFileSync(args.trajectory, path.join(dir, "trajectory.json"));
  const config = {
    ...intr,
    trajectory: "trajectory.json",
    images,
    cloud: "cloud.ply",
    grid: {
      bounds: [[-0.25, -0.25, -0.02], [0.25, 0.25, 0.18]],
      resolution: [40, 40, 16],
    },
    scales: [0.04, 0.07, 0.11, 0.16, 0.22, 0.3],
  };
  fs.writeFileSync(path.join(dir, "capture.json"), JSON.stringify(config, null, 2));
  fs.writeFileSync(path.join(dir, "annotations.json"),
                   JSON.stringify(annotations(), null, 2));
  console.log(JSON.stringify({ dir, images: images.length }));
}

export function main(argv: string[]): void {
  yargs(argv)
    .command(
      "export-field",
      "fuse a posed capture into an LFLD feature field",
      (y) => y
        .option("capture", { type: "string", demandOption: true,
                             describe: "capture.json path" })
        .option("out", { type: "string", demandOption: true })
        .option("report", { type: "string" })
        .option("model", { type: "string", default: "builtin" }),
      (args) => cmdExportField(args as never),
    )
    .command(
      "export-text",
      "emit the text-embedding sidecar for a phrase list",
      (y) => y
        .option("phrases", { type: "string", array: true, demandOption: true })
        .option("out", { type: "string", demandOption: true })
        .option("model", { type: "string", default: "builtin" }),
      (args) => cmdExportText(args as never),
    )
    .command(
      "make-demo",
      "regenerate the checked-in demo capture from a core trajectory JSON",
      (y) => y
        .option("dir", { type: "string", demandOption: true })
        .option("trajectory", { type: "string", demandOption: true }),
      (args) => cmdMakeDemo(args as never),
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      if (err instanceof ModelLoadFailure) {
        console.error(`ModelLoadFailure: ${err.message}`);
        process.exit(12);
      }
      console.error(msg ?? String(err));
      process.exit(err ? 1 : 2);
    })
    .parseSync();
}

if (require.main === module) {
  main(hideBin(process.argv));
}
