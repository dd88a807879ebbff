package com.example.util;

import java.util.List;

public final class ArrayUtils {
    private ArrayUtils() {
    }

    public static int[] of(int... values) {
        return values;
    }

    public static int max(int[] values) {
        int best = values[0];
        for (int v : values) {
            if (v > best) {
                best = v;
            }
        }
        return best;
    }

    public static int[] fromList(List<Integer> values) {
        int[] out = new int[values.size()];
        for (int i = 0; i < out.length; i++) {
            out[i] = values.get(i);
        }
        return out;
    }
}
