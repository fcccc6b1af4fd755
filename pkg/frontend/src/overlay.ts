/** Box overlay geometry: native-resolution boxes scaled to the displayed
 * image, with hit targets padded so small cameras stay clickable. */

export const MIN_HIT_PX = 24;

export interface Size {
  width: number;
  height: number;
}

export interface BoxLayout {
  index: number;
  /* visible outline, css px relative to the stage */
  left: number;
  top: number;
  width: number;
  height: number;
  /* padded click target, always >= MIN_HIT_PX on each side */
  hitLeft: number;
  hitTop: number;
  hitWidth: number;
  hitHeight: number;
}

/** One layout entry per box, in box order. Boxes are [x, y, w, h] in native
 * image pixels; the outline scales by displayed/native, the hit rectangle is
 * the outline grown symmetrically to the minimum target size. */
export function overlayLayout(boxes: number[][], natural: Size, display: Size): BoxLayout[] {
  if (natural.width <= 0 || natural.height <= 0) {
    throw new Error(`bad natural size ${natural.width}x${natural.height}`);
  }
  const sx = display.width / natural.width;
  const sy = display.height / natural.height;
  return boxes.map((box, index) => {
    const [x, y, w, h] = box;
    const left = x * sx;
    const top = y * sy;
    const width = w * sx;
    const height = h * sy;
    const padX = Math.max(0, (MIN_HIT_PX - width) / 2);
    const padY = Math.max(0, (MIN_HIT_PX - height) / 2);
    return {
      index,
      left,
      top,
      width,
      height,
      hitLeft: left - padX,
      hitTop: top - padY,
      hitWidth: width + 2 * padX,
      hitHeight: height + 2 * padY,
    };
  });
}
