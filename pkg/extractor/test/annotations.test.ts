import { describe, expect, it } from 'vitest'
import { parseCsvAnnotations, parseKittiLabel } from '../src/annotations'

describe('annotations', () => {
  it('parses simple csv with optional header', () => {
    const text = 'image,x1,y1,x2,y2,distance_m\nf0.png,1,2,30,40,12.5\n\nf1.png, 5, 6, 20, 22, 3.25\n'
    const anns = parseCsvAnnotations(text)
    expect(anns.length).toBe(2)
    expect(anns[0]).toEqual({ image: 'f0.png', x1: 1, y1: 2, x2: 30, y2: 40, distanceM: 12.5 })
    expect(anns[1].distanceM).toBe(3.25)
  })

  it('parses kitti label rows and skips DontCare', () => {
    const text = [
      'Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59',
      'DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10',
      'Pedestrian 0.00 2 0.i 0 0 10 10 1 1 1 0 0 5.5 0',
    ].join('\n')
    const anns = parseKittiLabel(text, 'frame7.png')
    expect(anns.length).toBe(2)
    expect(anns[0].image).toBe('frame7.png')
    expect(anns[0].x1).toBeCloseTo(587.01)
    expect(anns[0].distanceM).toBeCloseTo(46.7)
    expect(anns[1].distanceM).toBeCloseTo(5.5)
  })
})
