/** Binary little-endian PLY subset matching the core package's cloud format:
 * float properties x y z, optional red green blue, optional relevancy. */

export interface Cloud {
  points: Float64Array; // N x 3 flattened
  colors?: Float64Array; // N x 3 flattened, values in [0, 1]
}

export function writePly(cloud: Cloud): Buffer {
  const n = cloud.points.length / 3;
  const props = ["property float x", "property float y", "property float z"];
  let stride = 3;
  if (cloud.colors) {
    props.push("property float red", "property float green", "property float blue");
    stride = 6;
  }
  const header =
    ["ply", "format binary_little_endian 1.0", `element vertex ${n}`, ...props,
     "end_header", ""].join("\n");
  const head = Buffer.from(header, "ascii");
  const body = Buffer.alloc(n * stride * 4);
  for (let i = 0; i < n; i++) {
    body.writeFloatLE(cloud.points[3 * i], (i * stride) * 4);
    body.writeFloatLE(cloud.points[3 * i + 1], (i * stride + 1) * 4);
    body.writeFloatLE(cloud.points[3 * i + 2], (i * stride + 2) * 4);
    if (cloud.colors) {
      body.writeFloatLE(cloud.colors[3 * i], (i * stride + 3) * 4);
      body.writeFloatLE(cloud.colors[3 * i + 1], (i * stride + 4) * 4);
      body.writeFloatLE(cloud.colors[3 * i + 2], (i * stride + 5) * 4);
    }
  }
  return Buffer.concat([head, body]);
}

export function readPly(buf: Buffer): Cloud {
  const marker = Buffer.from("end_header\n", "ascii");
  const end = buf.indexOf(marker);
  if (!buf.subarray(0, 4).equals(Buffer.from("ply\n", "ascii")) || end < 0) {
    throw new Error("not a PLY file");
  }
  const lines = buf.subarray(0, end).toString("ascii").split("\n");
  if (!lines[1].includes("binary_little_endian")) {
    throw new Error("only binary little-endian PLY is supported");
  }
  let n = -1;
  const props: string[] = [];
  for (const line of lines.slice(2)) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "element" && parts[1] === "vertex") n = parseInt(parts[2], 10);
    else if (parts[0] === "element") throw new Error(`unsupported element ${parts[1]}`);
    else if (parts[0] === "property") {
      if (parts[1] !== "float") throw new Error("only float properties supported");
      props.push(parts[2]);
    }
  }
  if (n < 0) throw new Error("missing vertex element");
  for (const req of ["x", "y", "z"]) {
    if (!props.includes(req)) throw new Error(`missing property ${req}`);
  }
  const body = buf.subarray(end + marker.length);
  const stride = props.length;
  if (body.length < n * stride * 4) throw new Error("vertex payload truncated");
  const col = (name: string) => props.indexOf(name);
  const points = new Float64Array(n * 3);
  const hasColor = col("red") >= 0 && col("green") >= 0 && col("blue") >= 0;
  const colors = hasColor ? new Float64Array(n * 3) : undefined;
  for (let i = 0; i < n; i++) {
    points[3 * i] = body.readFloatLE((i * stride + col("x")) * 4);
    points[3 * i + 1] = body.readFloatLE((i * stride + col("y")) * 4);
    points[3 * i + 2] = body.readFloatLE((i * stride + col("z")) * 4);
    if (colors) {
      colors[3 * i] = body.readFloatLE((i * stride + col("red")) * 4);
      colors[3 * i + 1] = body.readFloatLE((i * stride + col("green")) * 4);
      colors[3 * i + 2] = body.readFloatLE((i * stride + col("blue")) * 4);
    }
  }
  return { points, colors };
}
