"""Command line front end.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 schema or
version mismatch between stage outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import io as fio
from .config import DEFAULT_CONFIG_TEXT, PipelineConfig, load_config
from .container import ContainerError, write_container
from .displacement_pca import DisplacementPCA, build_pca, load_pca, save_pca
from .expression_prior import (build_dictionary, downsampled_pixels, load_dictionary, load_features,
                               nearest_index, save_dictionary)
from .illumination import LightingError, SHLighting, render
from .model_core import (AffineCamera, DimensionError, MorphableModel, N_LANDMARKS, ProxyParams,
                         load_model, synthesize_albedo, synthesize_vertices)
from .normal_integration import (GradientField, IntegrationConfig, IntegrationError, gradients_from_normals,
                                 integrate)
from .pipeline import estimate_at_vertices, render_image, synthesize
from .proxy_fit import FitError, LandmarkSet, fit_proxy, reprojection_rms
from .texture_geom import (DisplacementMap, GeometryMaps, PatchGrid, SamplerConfig, apply_displacement,
                           compute_normals, detect_orientation, displacement_from_pair, rasterize_maps,
                           rasterize_mesh, rasterize_uv, sample_training_patches)

log = logging.getLogger("facedetail")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_SCHEMA = 0, 2, 3, 4


class InputError(Exception):
    pass


# -- helpers -----------------------------------------------------------------

def _require(path: Optional[str], what: str) -> str:
    if not path:
        raise InputError(f"no {what} given")
    if not os.path.exists(path):
        raise InputError(f"{what} not found: {path}")
    return path


def _out_dir(cfg: PipelineConfig, args) -> str:
    out = getattr(args, "out", None) or cfg.paths.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _model_dims(model: MorphableModel) -> Dict[str, int]:
    return {"n_vertices": model.n_vertices, "n_shape": model.n_shape,
            "n_expression": model.n_expression, "n_albedo": model.n_albedo}


def _load_landmarks(path: str, contour_weight: float) -> LandmarkSet:
    idx, pts, wts = fio.read_landmarks(path)
    if sorted(idx.tolist()) != list(range(N_LANDMARKS)):
        raise InputError(f"{path}: expected indices 0..{N_LANDMARKS - 1} exactly once each")
    order = np.argsort(idx)
    pts, wts = pts[order], wts[order]
    default = LandmarkSet.with_default_weights(pts, contour_weight)
    return LandmarkSet(pts, np.where(np.isnan(wts), default.weights, wts))


def _write_params(path: str, params: ProxyParams, model: MorphableModel) -> None:
    fio.write_record(path, "proxy_params", {
        "alpha": params.alpha.tolist(), "beta": params.beta.tolist(), "gamma": params.gamma.tolist(),
        "model": _model_dims(model)})


def _read_params(path: str, model: MorphableModel) -> ProxyParams:
    rec = fio.read_record(path, "proxy_params")
    if rec.get("model") != _model_dims(model):
        raise fio.SchemaError(f"{path}: parameters were fitted to a different model {rec.get('model')}")
    return ProxyParams(np.array(rec["alpha"], dtype=float), np.array(rec["beta"], dtype=float),
                       np.array(rec["gamma"], dtype=float))


def _read_camera(path: str) -> AffineCamera:
    return AffineCamera(np.array(fio.read_record(path, "camera")["matrix"], dtype=float))


def _proxy_inputs(cfg: PipelineConfig, args):
    model = load_model(_require(args.model or cfg.paths.model, "model"))
    proxy_dir = args.proxy_dir or cfg.paths.output_dir
    params = _read_params(_require(os.path.join(proxy_dir, "params.json"), "proxy parameters"), model)
    camera = _read_camera(_require(os.path.join(proxy_dir, "camera.json"), "camera"))
    return model, params, camera


def _load_mask(path: Optional[str], shape) -> np.ndarray:
    if path is None:
        return np.ones(shape, bool)
    m = fio.read_image(_require(path, "mask"))
    if m.ndim == 3:
        m = m.mean(axis=2)
    if m.shape != tuple(shape):
        raise InputError(f"mask shape {m.shape} != {tuple(shape)}")
    return m > 0.5


def _load_regions(cfg: PipelineConfig, resolution: int):
    if cfg.paths.regions is None:
        return None
    from PIL import Image
    labels = np.asarray(Image.open(_require(cfg.paths.regions, "region label map")))
    if labels.ndim == 3:
        labels = labels[..., 0]
    if labels.shape != (resolution, resolution):
        raise InputError(f"region map is {labels.shape}, texture is {resolution}x{resolution}")
    return labels.astype(np.int64)


def _load_pca_models(cfg: PipelineConfig, args) -> DisplacementPCA | Dict[int, DisplacementPCA]:
    models: Dict[int, DisplacementPCA] = {}
    if cfg.paths.region_pca:
        models = {int(k): load_pca(_require(v, f"PCA model for region {k}"))
                  for k, v in cfg.paths.region_pca.items()}
    path = args.pca or cfg.paths.pca
    if path is not None or not models:
        models.setdefault(0, load_pca(_require(path, "PCA model")))
    return models if len(models) > 1 or cfg.paths.regions else models[0]


# -- commands ----------------------------------------------------------------

def cmd_fit_proxy(cfg: PipelineConfig, args) -> int:
    model = load_model(_require(args.model or cfg.paths.model, "model"))
    image_path = _require(args.image or cfg.paths.image, "input image")
    landmarks = _load_landmarks(_require(args.landmarks or cfg.paths.landmarks, "landmark file"),
                                cfg.proxy.contour_weight)
    dict_path = args.dictionary or cfg.paths.dictionary
    feat_path = args.features or cfg.paths.features
    report = {"beta_source": "neutral"}
    beta = np.zeros(model.n_expression)
    if dict_path is not None:
        dictionary = load_dictionary(_require(dict_path, "dictionary"))
        if feat_path is not None:
            query = load_features(_require(feat_path, "feature file"))
            report["beta_source"] = "dictionary:features"
        else:
            query = downsampled_pixels(fio.read_image(image_path))
            report["beta_source"] = "dictionary:thumbnail"
        if query.size != dictionary.feature_dim:
            raise InputError(f"feature length {query.size} != dictionary feature dim {dictionary.feature_dim}")
        if dictionary.expression_dim != model.n_expression:
            raise InputError("dictionary expression size does not match the model")
        k = nearest_index(dictionary, query)
        beta = dictionary.expressions[k].astype(float)
        report["dictionary_index"] = k

    params, camera, objective = fit_proxy(model, landmarks, beta, cfg.proxy.fit_config())
    out = _out_dir(cfg, args)
    verts = synthesize_vertices(model, params).reshape(-1, 3)
    fio.write_obj(os.path.join(out, "proxy.obj"), verts, model.faces, model.uv_coords)
    _write_params(os.path.join(out, "params.json"), params, model)
    fio.write_record(os.path.join(out, "camera.json"), "camera", {"matrix": camera.matrix.tolist()})
    report.update({"objective": objective, "iterations": len(objective),
                   "reprojection_rms": reprojection_rms(model, camera, landmarks, params),
                   "config": dataclasses.asdict(cfg.proxy)})
    fio.write_record(os.path.join(out, "fit_report.json"), "fit_report", report)
    log.info("proxy fit: %d iterations, objective %.6g", len(objective), objective[-1])
    return EXIT_OK


def cmd_synthesize(cfg: PipelineConfig, args) -> int:
    model, params, camera = _proxy_inputs(cfg, args)
    image = fio.read_image(_require(args.image or cfg.paths.image, "input image"))
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    pca = _load_pca_models(cfg, args)
    grid = PatchGrid(cfg.patch.size, cfg.patch.stride)
    res = cfg.texture_resolution
    result = synthesize(model, params, camera, image, pca, res, grid, cfg.sfs,
                        cfg.lighting_iterations, cfg.color_space, _load_regions(cfg, res))
    out = _out_dir(cfg, args)
    fio.write_obj(os.path.join(out, "fine.obj"), result.fine_vertices, model.faces, model.uv_coords)
    fio.write_pfm(os.path.join(out, "displacement.pfm"), result.displacement.values)
    fio.write_pfm(os.path.join(out, "albedo.pfm"), result.albedo.values)
    fio.write_pfm(os.path.join(out, "texture.pfm"), result.texture)
    fio.write_lighting(os.path.join(out, "lighting.txt"), result.lighting.coeffs)
    fio.write_png(os.path.join(out, "rerender.png"), result.rerender)
    fio.write_record(os.path.join(out, "loss_summary.json"), "loss_summary", {
        "baseline_loss": result.baseline_loss, "final_loss": result.final_loss,
        "color_space": cfg.color_space, "orientation": result.orientation,
        "texture_resolution": res, "patches": result.patch_losses, "seed": cfg.seed})
    log.info("appearance loss %.6g -> %.6g", result.baseline_loss, result.final_loss)
    return EXIT_OK


def cmd_estimate_lighting(cfg: PipelineConfig, args) -> int:
    model, params, camera = _proxy_inputs(cfg, args)
    image = fio.read_image(_require(args.image or cfg.paths.image, "input image"))
    maps = rasterize_maps(model, params, cfg.texture_resolution)
    lighting, albedo = estimate_at_vertices(model, params, camera, image, maps, cfg.lighting_iterations)
    out = _out_dir(cfg, args)
    fio.write_lighting(os.path.join(out, "lighting.txt"), lighting.coeffs)
    fio.write_pfm(os.path.join(out, "albedo.pfm"), albedo.values)
    return EXIT_OK


def cmd_render(cfg: PipelineConfig, args) -> int:
    model, params, camera = _proxy_inputs(cfg, args)
    res = cfg.texture_resolution
    proxy_dir = args.proxy_dir or cfg.paths.output_dir
    lighting = SHLighting(fio.read_lighting(_require(args.lighting or os.path.join(proxy_dir, "lighting.txt"),
                                                     "lighting file")))
    maps = rasterize_maps(model, params, res)
    if args.albedo:
        albedo = fio.read_pfm(_require(args.albedo, "albedo map"))
        if albedo.shape[:2] != maps.shape:
            raise InputError(f"albedo map is {albedo.shape[:2]}, texture is {maps.shape}")
    else:
        raster = rasterize_uv(model.faces, model.uv_coords, res)
        albedo = raster.interpolate(model.faces, synthesize_albedo(model, params).reshape(-1, 3))
    disp = DisplacementMap.zeros_like(maps)
    if args.displacement:
        values = fio.read_pfm(_require(args.displacement, "displacement map"))
        if values.shape != maps.shape:
            raise InputError(f"displacement map is {values.shape}, texture is {maps.shape}")
        disp = DisplacementMap(values, maps.mask)
    normals, valid = compute_normals(apply_displacement(maps, disp), maps.mask, detect_orientation(maps))
    texture = np.clip(render(albedo, normals, lighting, valid), 0.0, 1.0)
    size = tuple(args.size) if args.size else (512, 512)
    img, covered = render_image(synthesize_vertices(model, params), model.faces, model.uv_coords,
                                camera, texture, size)
    fio.write_png(os.path.join(_out_dir(cfg, args), args.name), img)
    return EXIT_OK


def cmd_integrate(cfg: PipelineConfig, args) -> int:
    if args.normals:
        normals = fio.read_pfm(_require(args.normals, "normal map"))
        if normals.ndim != 3 or normals.shape[2] != 3:
            raise InputError("normal map must have 3 channels")
        mask = _load_mask(args.mask, normals.shape[:2])
        field, dropped = gradients_from_normals(normals, mask)
    else:
        p = fio.read_pfm(_require(args.p, "p gradient"))
        q = fio.read_pfm(_require(args.q, "q gradient"))
        if p.shape != q.shape or p.ndim != 2:
            raise InputError("p and q must be single-channel maps of equal size")
        field = GradientField(p, q, _load_mask(args.mask, p.shape))
    z0 = np.zeros(field.mask.shape) if args.z0 is None else fio.read_pfm(_require(args.z0, "depth prior"))
    if z0.shape != field.mask.shape:
        raise InputError(f"depth prior is {z0.shape}, gradients are {field.mask.shape}")
    out = _out_dir(cfg, args)
    if args.pair:
        for name, mu in (("depth_fine.pfm", cfg.integration.mu_fine), ("depth_smooth.pfm", cfg.integration.mu_smooth)):
            fio.write_pfm(os.path.join(out, name), integrate(field, z0, IntegrationConfig(mu=mu)))
    else:
        mu = cfg.integration.mu_smooth if args.mu is None else args.mu
        fio.write_pfm(os.path.join(out, args.name), integrate(field, z0, IntegrationConfig(mu=mu)))
    return EXIT_OK


def _scan_pairs(directory: str) -> List[tuple]:
    fine = sorted(glob.glob(os.path.join(directory, "*_fine.obj")))
    pairs = []
    for f in fine:
        s = f[:-len("_fine.obj")] + "_smooth.obj"
        if not os.path.exists(s):
            raise InputError(f"{f} has no matching {os.path.basename(s)}")
        pairs.append((os.path.basename(f)[:-len("_fine.obj")], f, s))
    if not pairs:
        raise InputError(f"no <name>_fine.obj / <name>_smooth.obj pairs in {directory}")
    return pairs


def cmd_prepare_dataset(cfg: PipelineConfig, args) -> int:
    _require(args.scans, "scan directory")
    res = cfg.texture_resolution
    sampler = SamplerConfig(cfg.patch.size, cfg.patch.sampler_sigma, cfg.patch.sampler_gain)
    patches, manifest = [], []
    for k, (name, fine_path, smooth_path) in enumerate(_scan_pairs(args.scans)):
        vf, ff, uf = fio.read_obj(fine_path)
        vs, fs, us = fio.read_obj(smooth_path)
        if uf is None or us is None:
            raise InputError(f"{name}: both meshes need texture coordinates")
        if not (np.array_equal(ff, fs) and uf.shape == us.shape and np.allclose(uf, us, atol=1e-6)):
            raise InputError(f"{name}: fine and smooth meshes do not share faces and UVs")
        raster = rasterize_uv(fs, us, res)
        fine_maps = rasterize_mesh(vf, ff, uf, res, raster)
        smooth_maps = rasterize_mesh(vs, fs, us, res, raster)
        common = fine_maps.mask & smooth_maps.mask
        disp = displacement_from_pair(
            GeometryMaps(fine_maps.position, fine_maps.normal, common),
            GeometryMaps(smooth_maps.position, smooth_maps.normal, common))
        origins = sample_training_patches(disp, cfg.seed + k, cfg.patch.training_per_map, sampler)
        s = cfg.patch.size
        patches.extend(disp.values[r:r + s, c:c + s] for r, c in origins)
        manifest.append({"name": name, "fine": os.path.basename(fine_path),
                         "smooth": os.path.basename(smooth_path), "origins": [list(o) for o in origins]})
    stack = np.stack(patches)
    rank = cfg.patch.rank
    if stack.shape[0] < rank + 1:
        log.warning("only %d patches; reducing PCA rank from %d to %d", stack.shape[0], rank, stack.shape[0] - 1)
        rank = stack.shape[0] - 1
    pca = build_pca(stack, rank)
    out = _out_dir(cfg, args)
    write_container(os.path.join(out, "corpus.fdm"), "patch_corpus", {"patches": stack},
                    attrs={"schema": "1", "count": str(stack.shape[0])})
    save_pca(pca, os.path.join(out, "pca.fdm"))
    energy = pca.singular_values ** 2
    total = float(np.sum((stack.reshape(len(stack), -1) - pca.mean_patch.ravel()) ** 2))
    fio.write_record(os.path.join(out, "manifest.json"), "patch_corpus", {
        "pairs": manifest, "patch_count": int(stack.shape[0]), "patch_size": cfg.patch.size,
        "texture_resolution": res, "rank": rank, "seed": cfg.seed,
        "energy_captured": float(energy.sum() / total) if total > 0 else 1.0})
    return EXIT_OK


def cmd_build_dictionary(cfg: PipelineConfig, args) -> int:
    feats = np.loadtxt(_require(args.features, "feature table"), dtype=float, ndmin=2)
    exprs = np.loadtxt(_require(args.expressions, "expression table"), dtype=float, ndmin=2)
    if len(feats) != len(exprs):
        raise InputError(f"{len(feats)} feature rows but {len(exprs)} expression rows")
    dictionary = build_dictionary(zip(feats, exprs))
    path = args.output or cfg.paths.dictionary
    if path is None:
        path = os.path.join(_out_dir(cfg, args), "dictionary.fdd")
    save_dictionary(dictionary, path)
    return EXIT_OK


def cmd_query_prior(cfg: PipelineConfig, args) -> int:
    dictionary = load_dictionary(_require(args.dictionary or cfg.paths.dictionary, "dictionary"))
    feat_path = args.features or cfg.paths.features
    if feat_path is not None:
        query = load_features(_require(feat_path, "feature file"))
    else:
        query = downsampled_pixels(fio.read_image(_require(args.image or cfg.paths.image, "input image")))
    if query.size != dictionary.feature_dim:
        raise InputError(f"feature length {query.size} != dictionary feature dim {dictionary.feature_dim}")
    k = nearest_index(dictionary, query)
    fio.write_record(os.path.join(_out_dir(cfg, args), "expression_prior.json"), "expression_prior",
                     {"index": k, "beta": dictionary.expressions[k].astype(float).tolist()})
    print(k)
    return EXIT_OK


def cmd_make_demo(cfg: PipelineConfig, args) -> int:
    from .model_core import save_model
    from .synthetic import make_demo_scene

    scene = make_demo_scene(cfg.seed, resolution=args.resolution, image_size=args.image_size,
                            patch_size=args.patch_size, rank=args.rank)
    out = args.directory
    os.makedirs(out, exist_ok=True)
    save_model(scene.model, os.path.join(out, "model.fdm"))
    save_pca(scene.pca, os.path.join(out, "pca.fdm"))
    save_dictionary(scene.dictionary, os.path.join(out, "dictionary.fdd"))
    fio.write_png(os.path.join(out, "image.png"), scene.image)
    fio.write_landmarks(os.path.join(out, "landmarks.txt"), scene.landmarks)
    np.savetxt(os.path.join(out, "features.txt"), scene.features[None], fmt="%.9g")
    fio.write_pfm(os.path.join(out, "true_displacement.pfm"), scene.displacement.values)
    fio.write_record(os.path.join(out, "truth.json"), "demo_truth", {
        "alpha": scene.params.alpha.tolist(), "beta": scene.params.beta.tolist(),
        "gamma": scene.params.gamma.tolist(), "camera": scene.camera.matrix.tolist(),
        "lighting": scene.lighting.coeffs.tolist(), "seed": cfg.seed})
    config = {
        "paths": {"model": "model.fdm", "dictionary": "dictionary.fdd", "pca": "pca.fdm",
                  "landmarks": "landmarks.txt", "image": "image.png", "features": "features.txt",
                  "output_dir": "out"},
        "texture_resolution": args.resolution,
        "patch": {"size": args.patch_size, "stride": args.patch_size // 2, "rank": args.rank},
        "sfs": {"max_iterations": args.sfs_iterations},
        "seed": cfg.seed,
    }
    with open(os.path.join(out, "config.yaml"), "w") as fh:
        fh.write("# Demo scene settings; every other key keeps its default.\n")
        yaml.safe_dump(config, fh, sort_keys=False)
    return EXIT_OK


def cmd_default_config(cfg: PipelineConfig, args) -> int:
    sys.stdout.write(DEFAULT_CONFIG_TEXT)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def _global_options() -> argparse.ArgumentParser:
    # Defaults are suppressed so the flags work before or after the subcommand.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="YAML pipeline configuration")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global random seed")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap on BLAS/LAPACK worker threads")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="facedetail", parents=[common],
                                     description="Face detail synthesis from a single image.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--out", help="output directory (default: paths.output_dir)")
        return p

    p = add("fit-proxy", cmd_fit_proxy, "fit the morphable-model proxy to landmarks")
    for opt in ("model", "image", "landmarks", "dictionary", "features"):
        p.add_argument(f"--{opt}")

    p = add("synthesize", cmd_synthesize, "estimate lighting/albedo and fit the displacement map")
    for opt in ("model", "image", "pca"):
        p.add_argument(f"--{opt}")
    p.add_argument("--proxy-dir", help="directory holding params.json and camera.json")

    p = add("estimate-lighting", cmd_estimate_lighting, "estimate SH lighting and albedo for a fitted proxy")
    for opt in ("model", "image"):
        p.add_argument(f"--{opt}")
    p.add_argument("--proxy-dir")

    p = add("render", cmd_render, "render the (optionally displaced) proxy in image space")
    for opt in ("model", "lighting", "albedo", "displacement"):
        p.add_argument(f"--{opt}")
    p.add_argument("--proxy-dir")
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--name", default="render.png")

    p = add("integrate", cmd_integrate, "integrate a normal or gradient field into depth")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--normals", help="3-channel PFM of unit normals")
    src.add_argument("--p", help="PFM of dz/du (use with --q)")
    p.add_argument("--q")
    p.add_argument("--z0", help="PFM depth prior (default zeros)")
    p.add_argument("--mask", help="PNG or PFM mask (> 0.5 is inside)")
    p.add_argument("--mu", type=float, help="prior weight (default integration.mu_smooth)")
    p.add_argument("--pair", action="store_true", help="write the fine and smooth integrations")
    p.add_argument("--name", default="depth.pfm")

    p = add("prepare-dataset", cmd_prepare_dataset, "build the patch corpus and PCA model from scan pairs")
    p.add_argument("scans", help="directory of <name>_fine.obj / <name>_smooth.obj pairs")

    p = add("build-dictionary", cmd_build_dictionary, "pack feature/expression rows into a dictionary file")
    p.add_argument("--features", required=True, help="text table, one feature vector per row")
    p.add_argument("--expressions", required=True, help="text table, one expression vector per row")
    p.add_argument("--output")

    p = add("query-prior", cmd_query_prior, "look up the expression prior for a feature vector")
    for opt in ("dictionary", "features", "image"):
        p.add_argument(f"--{opt}")

    p = add("make-demo", cmd_make_demo, "write a synthetic scene with ground truth and a config")
    p.add_argument("directory")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--patch-size", type=int, default=64)
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--sfs-iterations", type=int, default=40)

    add("default-config", cmd_default_config, "print the default configuration")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None))
        if hasattr(args, "seed"):
            cfg.seed = args.seed
        threads = getattr(args, "threads", None)
        with threadpool_limits(limits=threads):
            return args.func(cfg, args)
    except fio.SchemaError as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA
    except (FitError, IntegrationError, LightingError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (InputError, ContainerError, DimensionError, ValueError, KeyError, OSError, yaml.YAMLError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
