package com.example.calc;

import java.util.ArrayList;
import java.util.List;

public class Calc {
    private final int[] values;

    public Calc(int[] values) {
        this.values = values;
    }

    public int first() {
        return values[0];
    }

    public int last() {
        return values[values.length - 1];
    }

    public int sum() {
        int total = 0;
        for (int i = 0; i < values.length; i++) {
            total += values[i];
        }
        return total;
    }

    public List<Integer> toList() {
        List<Integer> out = new ArrayList<>();
        for (int v : values) {
            out.add(v);
        }
        return out;
    }
}
